//! Chain-rule sequence models over a finite alphabet `{0, .., V-1}`: count
//! based Markov models and a shared-weight neural next-symbol model.
//!
//! Contexts that reach before the start of a sequence are filled with the
//! pad symbol `V`, which only ever appears as context.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::neuralnet::{Activation, MlpGradients, MlpParams, OutputHead};
use crate::numcore::{DenseMatrix, Rng};
use crate::regression::{softmax, LabeledDataset};

pub const MAX_MARKOV_ORDER: usize = 4;
pub const MARKOV_SCHEMA: &str = "genlearn.markov/1";
pub const NEURAL_AR_SCHEMA: &str = "genlearn.neural_ar/1";

/// `n` sequences of common length `K` over an alphabet of size `V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceDataset {
    sequences: Vec<Vec<usize>>,
    alphabet: usize,
}

impl SequenceDataset {
    pub fn new(sequences: Vec<Vec<usize>>, alphabet: usize) -> Result<Self> {
        if alphabet == 0 {
            return Err(invalid("alphabet must be non-empty"));
        }
        if let Some(first) = sequences.first() {
            if sequences.iter().any(|s| s.len() != first.len()) {
                return Err(invalid("sequences must share one length"));
            }
        }
        if sequences.iter().flatten().any(|s| *s >= alphabet) {
            return Err(invalid(format!("symbol outside alphabet of size {alphabet}")));
        }
        Ok(SequenceDataset { sequences, alphabet })
    }

    /// One sequence per line, symbols separated by whitespace. The alphabet
    /// is `max symbol + 1` unless given.
    pub fn parse(text: &str, alphabet: Option<usize>) -> Result<Self> {
        let mut seqs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let seq = line
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|e| invalid(format!("line {}: {e}", i + 1))))
                .collect::<Result<Vec<_>>>()?;
            seqs.push(seq);
        }
        let v = match alphabet {
            Some(v) => v,
            None => seqs.iter().flatten().max().map_or(1, |m| m + 1),
        };
        Self::new(seqs, v)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for seq in &self.sequences {
            let line: Vec<String> = seq.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn sequences(&self) -> &[Vec<usize>] {
        &self.sequences
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.sequences.first().map_or(0, Vec::len)
    }
}

/// Anything that yields `p(x_k | x_1..x_{k-1})`.
pub trait SequenceModel {
    fn alphabet(&self) -> usize;
    /// Next-symbol pmf given the full prefix.
    fn conditional(&self, prefix: &[usize]) -> Vec<f64>;
}

/// Which tokens enter the perplexity average.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TokenRange {
    /// Positions `2..=K`, normalised by `n(K−1)`.
    #[default]
    FromSecond,
    /// Positions `1..=K`, normalised by `nK`.
    All,
}

/// Count-based Markov model of order `m` with additive smoothing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarkovFile", into = "MarkovFile")]
pub struct MarkovModel {
    order: usize,
    alphabet: usize,
    alpha: f64,
    /// One row per context code; see [`MarkovModel::context_code`].
    tables: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MarkovFile {
    schema: String,
    order: usize,
    alphabet: usize,
    alpha: f64,
    tables: Vec<Vec<f64>>,
}

impl TryFrom<MarkovFile> for MarkovModel {
    type Error = Error;
    fn try_from(f: MarkovFile) -> Result<Self> {
        if f.schema != MARKOV_SCHEMA {
            return Err(Error::Serialization(format!("unsupported markov schema `{}`", f.schema)));
        }
        MarkovModel::from_tables(f.order, f.alphabet, f.alpha, f.tables)
    }
}

impl From<MarkovModel> for MarkovFile {
    fn from(m: MarkovModel) -> Self {
        MarkovFile { schema: MARKOV_SCHEMA.into(), order: m.order, alphabet: m.alphabet, alpha: m.alpha, tables: m.tables }
    }
}

fn context_count(order: usize, alphabet: usize) -> usize {
    (alphabet + 1).pow(order as u32)
}

impl MarkovModel {
    pub fn from_tables(order: usize, alphabet: usize, alpha: f64, tables: Vec<Vec<f64>>) -> Result<Self> {
        if order > MAX_MARKOV_ORDER {
            return Err(Error::ContextTooLarge { order, max: MAX_MARKOV_ORDER });
        }
        if tables.len() != context_count(order, alphabet) {
            return Err(invalid("table count does not match order and alphabet"));
        }
        for row in &tables {
            if row.len() != alphabet
                || row.iter().any(|p| !(*p >= 0.0))
                || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12
            {
                return Err(invalid("every table row must be a pmf over the alphabet"));
            }
        }
        Ok(MarkovModel { order, alphabet, alpha, tables })
    }

    pub fn uniform(order: usize, alphabet: usize) -> Result<Self> {
        let rows = vec![vec![1.0 / alphabet as f64; alphabet]; context_count(order, alphabet)];
        Self::from_tables(order, alphabet, 0.0, rows)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.alpha
    }

    pub fn tables(&self) -> &[Vec<f64>] {
        &self.tables
    }

    /// Base-`(V+1)` code of the last `order` symbols of `prefix`, oldest
    /// first, with missing positions filled by the pad symbol `V`.
    pub fn context_code(&self, prefix: &[usize]) -> usize {
        let base = self.alphabet + 1;
        let mut code = 0;
        for j in 0..self.order {
            let back = self.order - j;
            let sym = if prefix.len() >= back { prefix[prefix.len() - back] } else { self.alphabet };
            code = code * base + sym;
        }
        code
    }

    pub fn row(&self, context: &[usize]) -> &[f64] {
        &self.tables[self.context_code(context)]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl SequenceModel for MarkovModel {
    fn alphabet(&self) -> usize {
        self.alphabet
    }

    fn conditional(&self, prefix: &[usize]) -> Vec<f64> {
        self.tables[self.context_code(prefix)].clone()
    }
}

/// Frequency-table estimate `(count + α)/(total + αV)` per context. With
/// `α = 0`, contexts never observed get the uniform row.
pub fn fit_markov(ds: &SequenceDataset, order: usize, alpha: f64) -> Result<MarkovModel> {
    if order > MAX_MARKOV_ORDER {
        return Err(Error::ContextTooLarge { order, max: MAX_MARKOV_ORDER });
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(invalid("smoothing constant must be finite and non-negative"));
    }
    let v = ds.alphabet();
    let mut model = MarkovModel { order, alphabet: v, alpha, tables: vec![vec![0.0; v]; context_count(order, v)] };
    for seq in ds.sequences() {
        for k in 0..seq.len() {
            let c = model.context_code(&seq[..k]);
            model.tables[c][seq[k]] += 1.0;
        }
    }
    for row in &mut model.tables {
        let total: f64 = row.iter().sum();
        let denom = total + alpha * v as f64;
        if denom == 0.0 {
            row.iter_mut().for_each(|p| *p = 1.0 / v as f64);
        } else {
            row.iter_mut().for_each(|p| *p = (*p + alpha) / denom);
        }
    }
    Ok(model)
}

/// `Σ_k log₂ p(x_k | x_1..x_{k-1})` in bits; `-∞` on a zero conditional.
pub fn sequence_loglik(model: &dyn SequenceModel, seq: &[usize]) -> f64 {
    (0..seq.len()).map(|k| model.conditional(&seq[..k])[seq[k]].log2()).sum()
}

pub fn dataset_loglik(model: &dyn SequenceModel, ds: &SequenceDataset) -> f64 {
    ds.sequences().iter().map(|s| sequence_loglik(model, s)).sum()
}

/// Perplexity over positions `2..=K`, `2^{-(1/(n(K−1))) Σ log₂ p}`.
pub fn perplexity(model: &dyn SequenceModel, ds: &SequenceDataset) -> Result<f64> {
    perplexity_with(model, ds, TokenRange::FromSecond)
}

pub fn perplexity_with(model: &dyn SequenceModel, ds: &SequenceDataset, range: TokenRange) -> Result<f64> {
    let k = ds.seq_len();
    let start = match range {
        TokenRange::FromSecond => 1,
        TokenRange::All => 0,
    };
    if ds.is_empty() || k <= start {
        return Err(invalid("perplexity needs at least one sequence with a scored token"));
    }
    if model.alphabet() != ds.alphabet() {
        return Err(invalid("model and dataset alphabets differ"));
    }
    // When every scored probability is the same p the geometric mean is p
    // itself, so 1/p avoids the log/exp round trip (a uniform model gives V).
    let (mut total, mut carry) = (0.0f64, 0.0f64);
    let mut common: Option<f64> = None;
    let mut constant = true;
    for seq in ds.sequences() {
        for j in start..k {
            let p = model.conditional(&seq[..j])[seq[j]];
            constant &= *common.get_or_insert(p) == p;
            if p == 0.0 {
                return Ok(f64::INFINITY);
            }
            let term = p.log2();
            let t = total + term;
            carry += if total.abs() >= term.abs() { (total - t) + term } else { (term - t) + total };
            total = t;
        }
    }
    if let (true, Some(p)) = (constant, common) {
        return Ok(1.0 / p);
    }
    let tokens = (ds.len() * (k - start)) as f64;
    Ok((-(total + carry) / tokens).exp2())
}

/// Draws `x_1 ~ p(x_1)`, then each `x_k ~ p(x_k | x_1..x_{k-1})`.
pub fn sample_ancestral(model: &dyn SequenceModel, rng: &mut Rng, length: usize) -> Result<Vec<usize>> {
    if length == 0 {
        return Err(invalid("sample length must be positive"));
    }
    let mut seq = Vec::with_capacity(length);
    for _ in 0..length {
        let p = model.conditional(&seq);
        seq.push(rng.categorical(&p));
    }
    Ok(seq)
}

/// Neural next-symbol model: one network maps a one-hot encoding of the last
/// `c` symbols (pad-filled at the start) to next-symbol probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NeuralArFile", into = "NeuralArFile")]
pub struct NeuralArModel {
    context: usize,
    alphabet: usize,
    net: MlpParams,
}

#[derive(Serialize, Deserialize)]
struct NeuralArFile {
    schema: String,
    context: usize,
    alphabet: usize,
    net: MlpParams,
}

impl TryFrom<NeuralArFile> for NeuralArModel {
    type Error = Error;
    fn try_from(f: NeuralArFile) -> Result<Self> {
        if f.schema != NEURAL_AR_SCHEMA {
            return Err(Error::Serialization(format!("unsupported neural-ar schema `{}`", f.schema)));
        }
        NeuralArModel::from_net(f.context, f.alphabet, f.net)
    }
}

impl From<NeuralArModel> for NeuralArFile {
    fn from(m: NeuralArModel) -> Self {
        NeuralArFile { schema: NEURAL_AR_SCHEMA.into(), context: m.context, alphabet: m.alphabet, net: m.net }
    }
}

impl NeuralArModel {
    /// Fresh model; hidden layers get the usual uniform initialisation and
    /// the output layer starts at zero, so the untrained model is uniform.
    pub fn new(rng: &mut Rng, alphabet: usize, context: usize, hidden: &[usize], activation: Activation) -> Result<Self> {
        if alphabet < 2 {
            return Err(invalid("neural AR model needs at least two symbols"));
        }
        let mut net = MlpParams::init(rng, context * (alphabet + 1), hidden, activation, alphabet, OutputHead::Categorical)?;
        let last = net.layers().len() - 1;
        net.layers_mut()[last].weights.data_mut().iter_mut().for_each(|w| *w = 0.0);
        Ok(NeuralArModel { context, alphabet, net })
    }

    pub fn from_net(context: usize, alphabet: usize, net: MlpParams) -> Result<Self> {
        if net.input_dim() != context * (alphabet + 1) || net.output_dim() != alphabet || net.head() != OutputHead::Categorical {
            return Err(invalid("network shape does not match context and alphabet"));
        }
        Ok(NeuralArModel { context, alphabet, net })
    }

    pub fn context(&self) -> usize {
        self.context
    }

    pub fn net(&self) -> &MlpParams {
        &self.net
    }

    /// One-hot encoding of the last `c` symbols of `prefix`, oldest first.
    pub fn encode(&self, prefix: &[usize]) -> Vec<f64> {
        let w = self.alphabet + 1;
        let mut x = vec![0.0; self.context * w];
        for j in 0..self.context {
            let back = self.context - j;
            let sym = if prefix.len() >= back { prefix[prefix.len() - back] } else { self.alphabet };
            x[j * w + sym] = 1.0;
        }
        x
    }

    /// Every `(context, next symbol)` pair of the dataset.
    pub fn training_pairs(&self, ds: &SequenceDataset) -> Result<LabeledDataset> {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for seq in ds.sequences() {
            for k in 0..seq.len() {
                rows.extend(self.encode(&seq[..k]));
                labels.push(seq[k]);
            }
        }
        let n = labels.len();
        LabeledDataset::classification(DenseMatrix::new(n, self.context * (self.alphabet + 1), rows)?, labels, self.alphabet)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl SequenceModel for NeuralArModel {
    fn alphabet(&self) -> usize {
        self.alphabet
    }

    fn conditional(&self, prefix: &[usize]) -> Vec<f64> {
        let (_, cache) = self.net.forward(&self.encode(prefix)).expect("encoding matches network width");
        softmax(cache.logits())
    }
}

/// Trains a softmax-regression next-symbol model (no hidden layer) on the
/// last `c` symbols.
pub fn fit_neural_ar(ds: &SequenceDataset, c: usize, cfg: &ExperimentConfig) -> Result<(NeuralArModel, Vec<f64>)> {
    let mut rng = Rng::new(cfg.seed).substream("neural_ar.init");
    let model = NeuralArModel::new(&mut rng, ds.alphabet(), c, &[], Activation::Identity)?;
    train_neural_ar(&model, ds, cfg)
}

/// Mini-batch SGD on the next-symbol categorical loss over all positions for
/// `cfg.max_steps` epochs. The trace holds the training perplexity after
/// each epoch.
pub fn train_neural_ar(model: &NeuralArModel, ds: &SequenceDataset, cfg: &ExperimentConfig) -> Result<(NeuralArModel, Vec<f64>)> {
    cfg.validate()?;
    if model.alphabet != ds.alphabet() {
        return Err(invalid("model and dataset alphabets differ"));
    }
    let pairs = model.training_pairs(ds)?;
    let mut model = model.clone();
    let mut rng = Rng::new(cfg.seed).substream("neural_ar.batches");
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut trace = Vec::with_capacity(cfg.max_steps);
    let mut step = 0;
    for _ in 0..cfg.max_steps {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let (l, g): (f64, MlpGradients) = model.net.loss_and_gradient(&pairs.subset(chunk))?;
            if !l.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss at step {step}")));
            }
            model.net.apply_gradient(cfg.learning_rate / chunk.len() as f64, &g);
            step += 1;
        }
        let ppl = if ds.seq_len() >= 2 { perplexity(&model, ds)? } else { perplexity_with(&model, ds, TokenRange::All)? };
        if !ppl.is_finite() {
            return Err(Error::Diverged(format!("non-finite perplexity after step {step}")));
        }
        trace.push(ppl);
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abab() -> SequenceDataset {
        SequenceDataset::new(vec![vec![0, 1, 0, 1, 0, 1]], 2).unwrap()
    }

    #[test]
    fn alternating_sequence_is_deterministic() {
        let m = fit_markov(&abab(), 1, 0.0).unwrap();
        assert_eq!(m.row(&[0]), &[0.0, 1.0]);
        assert_eq!(m.row(&[1]), &[1.0, 0.0]);
        assert_eq!(sequence_loglik(&m, &[0, 1, 0, 1, 0, 1]), 0.0);
        assert_eq!(perplexity(&m, &abab()).unwrap(), 1.0);
        assert_eq!(sequence_loglik(&m, &[0, 0]), f64::NEG_INFINITY);
        let broken = SequenceDataset::new(vec![vec![0, 0, 1]], 2).unwrap();
        assert_eq!(perplexity(&m, &broken).unwrap(), f64::INFINITY);
    }

    #[test]
    fn heavy_smoothing_is_uniform() {
        let m = fit_markov(&abab(), 2, 1e9).unwrap();
        for row in m.tables() {
            assert!(row.iter().all(|p| (p - 0.5).abs() < 1e-6));
        }
    }

    #[test]
    fn order_zero_is_marginal_frequency() {
        let ds = SequenceDataset::new(vec![vec![0, 0, 2, 1], vec![2, 2, 2, 0]], 3).unwrap();
        let m = fit_markov(&ds, 0, 0.0).unwrap();
        assert_eq!(m.row(&[]), &[3.0 / 8.0, 1.0 / 8.0, 4.0 / 8.0]);
    }

    #[test]
    fn order_limit() {
        assert!(matches!(fit_markov(&abab(), 5, 1.0), Err(Error::ContextTooLarge { order: 5, .. })));
    }

    #[test]
    fn uniform_model_values() {
        let m = MarkovModel::uniform(1, 4).unwrap();
        assert!((sequence_loglik(&m, &[0, 3, 2, 1, 1]) + 10.0).abs() < 1e-12);
        let ds = SequenceDataset::new(vec![vec![0, 3, 2], vec![1, 1, 1]], 4).unwrap();
        assert!((perplexity(&m, &ds).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn start_context_uses_padding() {
        let ds = SequenceDataset::new(vec![vec![1, 0], vec![1, 1]], 2).unwrap();
        let m = fit_markov(&ds, 1, 0.0).unwrap();
        assert_eq!(m.row(&[]), &[0.0, 1.0]);
        assert_eq!(m.row(&[1]), &[0.5, 0.5]);
    }

    #[test]
    fn parse_and_print() {
        let ds = SequenceDataset::parse("0 1 2\n2 1 0\n\n", None).unwrap();
        assert_eq!(ds.alphabet(), 3);
        assert_eq!(ds.to_text(), "0 1 2\n2 1 0\n");
        assert!(SequenceDataset::parse("0 1\n0", None).is_err());
        assert!(SequenceDataset::parse("0 x", None).is_err());
    }

    #[test]
    fn deterministic_model_samples_fixed_sequence() {
        let m = fit_markov(&abab(), 1, 0.0).unwrap();
        for seed in 0..5 {
            let s = sample_ancestral(&m, &mut Rng::new(seed), 6).unwrap();
            assert_eq!(s, vec![0, 1, 0, 1, 0, 1]);
        }
    }

    #[test]
    fn untrained_neural_model_is_uniform() {
        let mut rng = Rng::new(3);
        let m = NeuralArModel::new(&mut rng, 3, 2, &[4], Activation::Logistic).unwrap();
        let ds = SequenceDataset::new(vec![vec![0, 2, 1, 1, 0]], 3).unwrap();
        assert!((perplexity(&m, &ds).unwrap() - 3.0).abs() < 1e-12);
        let s = m.to_json().unwrap();
        assert_eq!(NeuralArModel::from_json(&s).unwrap(), m);
    }

    #[test]
    fn markov_json_roundtrip() {
        let m = fit_markov(&abab(), 2, 0.5).unwrap();
        let s = m.to_json().unwrap();
        assert_eq!(MarkovModel::from_json(&s).unwrap(), m);
    }
}
