use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use genlearn::autoregressive::{
    dataset_loglik, fit_markov, fit_neural_ar, perplexity, sample_ancestral, train_neural_ar, MarkovModel, NeuralArModel,
    SequenceDataset, SequenceModel,
};
use genlearn::diffusion::{
    diffusion_train, make_schedule, BetaSpec, DenoiserArch, DiffusionOptions, NoiseWeighting, PredictionMode,
};
use genlearn::divergence::{cross_entropy, f_divergence, hellinger, renyi_divergence, FDivSpec, Pmf};
use genlearn::elbo_vae::{vae_loss, vae_train, VaeArch};
use genlearn::gan::{gan_train, value_function, GanArch, GanOptions};
use genlearn::latent::{em_fit, gmm_loglik, ppca_fit, ppca_loglik};
use genlearn::neuralnet::{train, MlpParams, OutputHead};
use genlearn::numcore::{DenseMatrix, Rng};
use genlearn::regression::{
    fit_linear, fit_logistic, fit_multiclass, linear_loglik, logistic_loglik, multiclass_loglik, predict_linear,
    LabeledDataset, Targets,
};
use genlearn::score::{dsm_objective, dsm_train, score_of, DensitySpec, ScoreArch, ScoreFn};
use genlearn::ExperimentConfig;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::*;
use crate::error::CliError;
use crate::io::{jsonl, read_bytes, sha256_hex, Table};
use crate::manifest::{FileDigest, METRICS_SCHEMA};
use crate::models::SavedModel;

/// Resolves relative input paths and records what was read.
pub struct Inputs {
    base: PathBuf,
    pub digests: Vec<FileDigest>,
}

impl Inputs {
    pub fn new(base: PathBuf) -> Self {
        Inputs { base, digests: Vec::new() }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn bytes(&mut self, p: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = read_bytes(&self.resolve(p))?;
        self.digests.push(FileDigest { path: p.display().to_string(), sha256: sha256_hex(&bytes) });
        Ok(bytes)
    }

    fn text(&mut self, p: &Path) -> Result<String, CliError> {
        String::from_utf8(self.bytes(p)?).map_err(|_| CliError::Usage(format!("{} is not UTF-8", p.display())))
    }

    fn table(&mut self, p: &Path) -> Result<Table, CliError> {
        let text = self.text(p)?;
        Table::parse(&text, p)
    }

    fn sequences(&mut self, p: &Path, alphabet: Option<usize>) -> Result<SequenceDataset, CliError> {
        let text = self.text(p)?;
        Ok(SequenceDataset::parse(&text, alphabet)?)
    }

    fn model(&mut self, p: &Path) -> Result<SavedModel, CliError> {
        let text = self.text(p)?;
        SavedModel::parse(&text)
    }
}

/// Files to write plus what goes into the manifest.
#[derive(Default)]
pub struct Outcome {
    pub files: Vec<(String, Vec<u8>)>,
    pub config: Option<ExperimentConfig>,
    pub schemas: BTreeMap<String, String>,
    pub stdout: String,
}

impl Outcome {
    fn file(mut self, name: &str, bytes: Vec<u8>, schema: &str) -> Self {
        self.files.push((name.to_string(), bytes));
        self.schemas.insert(name.to_string(), schema.to_string());
        self
    }

    fn model(self, m: &SavedModel) -> Result<Self, CliError> {
        let bytes = m.to_bytes()?;
        Ok(self.file("model.json", bytes, m.schema()))
    }

    fn metrics<T: Serialize>(self, records: &[T]) -> Self {
        self.file("metrics.jsonl", jsonl(records), METRICS_SCHEMA)
    }

    fn say(mut self, line: impl AsRef<str>) -> Self {
        self.stdout.push_str(line.as_ref());
        self.stdout.push('\n');
        self
    }
}

struct Defaults {
    lr: f64,
    steps: usize,
    batch: usize,
    mc: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    learning_rate: Option<f64>,
    max_steps: Option<usize>,
    batch_size: Option<usize>,
    mc_samples: Option<usize>,
}

fn resolve_config(t: &TrainOpts, d: Defaults, inputs: &mut Inputs) -> Result<ExperimentConfig, CliError> {
    let file = match &t.config {
        Some(p) => {
            let text = inputs.text(p)?;
            serde_json::from_str::<ConfigFile>(&text)
                .map_err(|e| CliError::Usage(format!("bad config {}: {e}", p.display())))?
        }
        None => ConfigFile { seed: None, learning_rate: None, max_steps: None, batch_size: None, mc_samples: None },
    };
    let seed = t.seed.or(file.seed).ok_or_else(|| CliError::Usage("a seed is required (--seed or config)".into()))?;
    let cfg = ExperimentConfig::new(seed)
        .with_learning_rate(t.lr.or(file.learning_rate).unwrap_or(d.lr))
        .with_max_steps(t.max_steps.or(file.max_steps).unwrap_or(d.steps))
        .with_batch_size(t.batch_size.or(file.batch_size).unwrap_or(d.batch))
        .with_mc_samples(t.mc_samples.or(file.mc_samples).unwrap_or(d.mc));
    if !(cfg.learning_rate > 0.0) || !cfg.learning_rate.is_finite() {
        return Err(CliError::Usage("learning rate must be positive".into()));
    }
    if cfg.max_steps == 0 || cfg.batch_size == 0 || cfg.mc_samples == 0 {
        return Err(CliError::Usage("max-steps, batch-size and mc-samples must be positive".into()));
    }
    Ok(cfg)
}

fn require_positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{name} must be positive")))
    }
}

pub fn dispatch(cmd: &Command, inputs: &mut Inputs) -> Result<Outcome, CliError> {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::FitLinreg(a) => fit_linreg(a, inputs),
        Command::FitLogreg(a) => fit_classifier(a, inputs, false),
        Command::FitMulticlass(a) => fit_classifier(a, inputs, true),
        Command::FitMarkov(a) => fit_markov_cmd(a, inputs),
        Command::FitNeuralAr(a) => fit_neural_ar_cmd(a, inputs),
        Command::FitGmm(a) => fit_gmm(a, inputs),
        Command::FitPpca(a) => fit_ppca(a, inputs),
        Command::TrainMlp(a) => train_mlp(a, inputs),
        Command::TrainVae(a) => train_vae(a, inputs),
        Command::TrainDiffusion(a) => train_diffusion(a, inputs),
        Command::TrainGan(a) => train_gan(a, inputs),
        Command::TrainScore(a) => train_score(a, inputs),
        Command::Sample(a) => sample(a, inputs),
        Command::Evaluate(a) => evaluate(a, inputs),
        Command::Divergence(a) => divergence(a),
        Command::Replay(_) => unreachable!("replay is handled by the runner"),
    }
}

fn gen_data(a: &GenDataArgs) -> Result<Outcome, CliError> {
    if a.n == 0 {
        return Err(CliError::Usage("n must be at least 1".into()));
    }
    let root = Rng::new(a.seed);
    let out = Outcome::default();
    match a.kind {
        DataKind::Line => {
            if !(a.noise >= 0.0) || !a.noise.is_finite() {
                return Err(CliError::Usage("noise must be non-negative".into()));
            }
            let mut rng = root.substream("gen.line");
            let mut values = DenseMatrix::zeros(a.n, 2);
            for r in 0..a.n {
                let x = rng.uniform_range(-2.0, 2.0);
                let e = rng.normal();
                values[(r, 0)] = x;
                values[(r, 1)] = a.intercept + a.slope * x + a.noise * e;
            }
            let t = Table { columns: vec!["x".into(), "y".into()], values };
            Ok(out.file("data.csv", t.to_csv(), "csv").say(format!("{} rows of (x, y)", a.n)))
        }
        DataKind::Mixture2d => {
            let sd = a.sd.unwrap_or(0.5);
            require_positive("sd", sd)?;
            if a.modes == 0 {
                return Err(CliError::Usage("modes must be at least 1".into()));
            }
            let mut rng = root.substream("gen.mixture2d");
            let mut values = DenseMatrix::zeros(a.n, 2);
            for r in 0..a.n {
                let j = rng.below(a.modes);
                let angle = std::f64::consts::FRAC_PI_4 + std::f64::consts::TAU * j as f64 / a.modes as f64;
                let e = rng.normal_vec(2);
                values[(r, 0)] = a.radius * angle.cos() + sd * e[0];
                values[(r, 1)] = a.radius * angle.sin() + sd * e[1];
            }
            let t = Table::from_matrix(values);
            Ok(out.file("data.csv", t.to_csv(), "csv").say(format!("{} rows from {} modes", a.n, a.modes)))
        }
        DataKind::SeparatedGaussians => {
            let sd = a.sd.unwrap_or(1.0);
            require_positive("sd", sd)?;
            let mut rng = root.substream("gen.separated_gaussians");
            let mut values = DenseMatrix::zeros(a.n, 1);
            for r in 0..a.n {
                let sign = if rng.below(2) == 0 { -1.0 } else { 1.0 };
                values[(r, 0)] = sign * a.separation / 2.0 + sd * rng.normal();
            }
            let t = Table { columns: vec!["x".into()], values };
            Ok(out.file("data.csv", t.to_csv(), "csv").say(format!("{} rows", a.n)))
        }
        DataKind::MarkovChain => {
            if a.alphabet < 2 || a.length == 0 {
                return Err(CliError::Usage("markov-chain needs alphabet ≥ 2 and length ≥ 1".into()));
            }
            let mut table_rng = root.substream("gen.markov_chain.table");
            let tables: Vec<Vec<f64>> = (0..=a.alphabet)
                .map(|_| {
                    let w: Vec<f64> = (0..a.alphabet).map(|_| table_rng.uniform_range(0.05, 1.0)).collect();
                    let s: f64 = w.iter().sum();
                    w.iter().map(|v| v / s).collect()
                })
                .collect();
            let chain = MarkovModel::from_tables(1, a.alphabet, 0.0, tables)?;
            let mut rng = root.substream("gen.markov_chain.sequences");
            let seqs = (0..a.n).map(|_| sample_ancestral(&chain, &mut rng, a.length)).collect::<Result<Vec<_>, _>>()?;
            let ds = SequenceDataset::new(seqs, a.alphabet)?;
            let chain = SavedModel::Markov(chain);
            Ok(out
                .file("sequences.txt", ds.to_text().into_bytes(), "text")
                .file("chain.json", chain.to_bytes()?, chain.schema())
                .say(format!("{} sequences of length {}", a.n, a.length)))
        }
    }
}

fn fit_linreg(a: &LinregArgs, inputs: &mut Inputs) -> Result<Outcome, CliError> {
    let ds = inputs.table(&a.data)?.regression(&a.target)?;
    let p = fit_linear(&ds)?;
    let ll = if p.exact_fit { None } else { Some(linear_loglik(&p, &ds)?) };
    let rec = json!({"step": 0, "loglik_bits": ll, "rss": p.rss, "noise_variance": p.noise_variance});
    let summary = format!("w = {:?}, noise variance {}", p.w, p.noise_variance);
    Ok(Outcome::default().model(&SavedModel::Linreg(p))?.metrics(&[rec]).say(summary))
}

fn fit_classifier(a: &ClassifierArgs, inputs: &mut Inputs, multiclass: bool) -> Result<Outcome, CliError> {
    let ds = inputs.table(&a.data)?.classification(&a.target, a.classes)?;
    let cfg = resolve_config(&a.train, Defaults { lr: 0.1, steps: 1000, batch: 32, mc: 1 }, inputs)?;
    let fit = if multiclass { fit_multiclass(&ds, &cfg)? } else { fit_logistic(&ds, &cfg)? };
    let recs: Vec<_> = fit.trace.iter().enumerate().map(|(i, v)| json!({"step": i, "loglik_bits": v})).collect();
    let last = fit.trace.last().copied().unwrap_or(f64::NAN);
    let stop = serde_json::to_string(&fit.stop).expect("stop reason serialises");
    Ok(Outcome { config: Some(cfg), ..Default::default() }
        .model(&SavedModel::Logreg(fit.params))?
        .metrics(&recs)
        .say(format!("log-likelihood {last} bits after {} steps (stop {stop})", fit.steps)))
}

fn fit_markov_cmd(a: &MarkovArgs, inputs: &mut Inputs) -> Result<Outcome, CliError> {
    let ds = inputs.sequences(&a.data, a.alphabet)?;
    let m = fit_markov(&ds, a.order, a.alpha)?;
    let ppl = perplexity(&m, &ds)?;
    let rec = json!({"step": 0, "perplexity": ppl, "loglik_bits": dataset_loglik(&m, &ds)});
    Ok(Outcome::default().model(&SavedModel::Markov(m))?.metrics(&[rec]).say(format!("training perplexity {ppl}")))
}

fn fit_neural_ar_cmd(a: &NeuralArArgs, inputs: &mut Inputs) -> Result<Outcome, CliError> {
    let ds = inputs.sequences(&a.data, a.alphabet)?;
    let cfg = resolve_config(&a.train, Defaults { lr: 0.1, steps: 20, batch: 32, mc: 1 }, inputs)?;
    let (m, trace) = if a.hidden.0.is_empty() {
        fit_neural_ar(&ds, a.context, &cfg)?
    } else {
        let mut rng = Rng::new(cfg.seed).substream("neural_ar.init");
        let init = NeuralArModel::new(&mut rng, ds.alphabet(), a.context, &a.hidden.0, a.activation.into())?;
        train_neural_ar(&init, &ds, &cfg)?
    };
    let recs: Vec<_> = trace.iter().enumerate().map(|(i, v)| json!({"step": i + 1, "perplexity": v})).collect();
    let last = trace.last().copied().unwrap_or(f64::NAN);
    Ok(Outcome { config: Some(cfg), ..Default::default() }
        .model(&SavedModel::NeuralAr(m))?
        .metrics(&recs)
        .say(format!("training perplexity {last}")))
}

fn fit_gmm(a: &GmmArgs, inputs: &mut Inputs) -> Result<Outcome, CliError> {
    let ds = inputs.table(&a.data)?.values;
    let cfg = resolve_config(&a.train, Defaults { lr: 1.0, steps: 200, batch: 1, mc: 1 }, inputs)?;
    let state = em_fit(&ds, a.components, &cfg)?;
    let recs: Vec<_> = state.trace.iter().enumerate().map(|(i, v)| json!({"step": i, "loglik_nats": v})).collect();
    let summary = format!("log-likelihood {} nats after {} steps", state.loglik(), state.trace.len() - 1);
    Ok(Outcome { config: Some(cfg), ..Default::default() }.model(&SavedModel::Gmm(state.params))?.metrics(&recs).say(summary))
}

fn fit_ppca(a: &PpcaArgs, inputs: &mut Inputs) -> Result<Outcome, CliError> {
    let ds = inputs.table(&a.data)?.values;
    let p = ppca_fit(&ds, a.latent_dim)?;
    let ll = ppca_loglik(&p, &ds)?;
    let rec = json!({"step": 0, "loglik_nats": ll, "noise_variance": p.noise_variance});
    Ok(Outcome::default().model(&SavedModel::Ppca(p))?.metrics(&[rec]).say(format!("log-likelihood {ll} nats")))
}

fn mlp_dataset(table: &Table, target: &str, head: Head, classes: Option<usize>) -> Result<LabeledDataset, CliError> {
    match head {
        Head::Regression => table.regression(target),
        Head::Bernoulli => table.classification(target, Some(classes.unwrap_or(2))),
        Head::Categorical => table.classification(target, classes),
    }
}

fn train_mlp(a: &MlpArgs, inputs: &mut Inputs) -> Result<Outcome, CliError> {
    let ds = mlp_dataset(&inputs.table(&a.data)?, &a.target, a.head, a.classes)?;
    let cfg = resolve_config(&a.train, Defaults { lr: 0.05, steps: 100, batch: 32, mc: 1 }, inputs)?;
    let (head, out_dim) = match (a.head, ds.targets()) {
        (Head::Regression, _) => (OutputHead::GaussianRegression, 1),
        (Head::Bernoulli, _) => (OutputHead::Bernoulli, 1),
        (Head::Categorical, Targets::Classes { num_classes, .. }) => (OutputHead::Categorical, *num_classes),
        (Head::Categorical, Targets::Real(_)) => unreachable!("categorical data have class targets"),
    };
    let mut rng = Rng::new(cfg.seed).substream("mlp.init");
    let mut net = MlpParams::init(&mut rng, ds.dim(), &a.hidden.0, a.activation.into(), out_dim, head)?;
    if head == OutputHead::GaussianRegression {
        net = net.with_noise_variance(a.noise_variance)?;
    }
    let (net, trace) = train(&net, &ds, &cfg)?;
    let recs: Vec<_> = trace.iter().enumerate().map(|(i, v)| json!({"step": i + 1, "loss_nats": v})).collect();
    let last = trace.last().copied().unwrap_or(f64::NAN);
    Ok(Outcome { config: Some(cfg), ..Default::default() }
        .model(&SavedModel::Mlp(net))?
        .metrics(&recs)
        .say(format!("mean loss {last} nats")))
}

fn train_vae(a: &VaeArgs, inputs: &mut Inputs) -> Result<Outcome, CliError> {
    let ds = inputs.table(&a.data)?.values;
    let cfg = resolve_config(&a.train, Defaults { lr: 0.01, steps: 100, batch: 32, mc: 1 }, inputs)?;
    let arch = VaeArch {
        latent_dim: a.latent_dim,
        hidden: a.hidden.0.clone(),
        activation: a.activation.into(),
        decoder_variance: a.decoder_variance,
    };
    let (m, trace) = vae_train(&ds, &arch, &cfg)?;
    let recs: Vec<_> = trace.iter().enumerate().map(|(i, v)| json!({"step": i + 1, "elbo_nats": v})).collect();
    let last = trace.last().copied().unwrap_or(f64::NAN);
    Ok(Outcome { config: Some(cfg), ..Default::default() }
        .model(&SavedModel::Vae(m))?
        .metrics(&recs)
        .say(format!("ELBO {last} nats per datapoint")))
}

fn train_diffusion(a: &DiffusionArgs, inputs: &mut Inputs) -> Result<Outcome, CliError> {
    let ds = inputs.table(&a.data)?.values;
    let cfg = resolve_config(&a.train, Defaults { lr: 0.05, steps: 5000, batch: 128, mc: 1 }, inputs)?;
    let schedule = make_schedule(a.timesteps, BetaSpec::Linear { lo: a.beta_lo, hi: a.beta_hi })?;
    let arch = DenoiserArch {
        hidden: a.hidden.0.clone(),
        activation: a.activation.into(),
        mode: match a.mode {
            Mode::Mean => PredictionMode::Mean,
            Mode::Noise => PredictionMode::Noise,
        },
    };
    let opts = DiffusionOptions {
        weighting: match a.weighting {
            Weighting::Unweighted => NoiseWeighting::Unweighted,
            Weighting::ForwardVariance => NoiseWeighting::ForwardVariance,
            Weighting::PosteriorVariance => NoiseWeighting::PosteriorVariance,
        },
        standardize: !a.no_standardize,
    };
    let trained = diffusion_train(&ds, &schedule, &arch, &cfg, &opts)?;
    let recs: Vec<_> =
        trained.trace.iter().map(|r| json!({"step": r.step, "t": r.t, "loss_nats": r.loss})).collect();
    let last = trained.trace.last().map_or(f64::NAN, |r| r.loss);
    Ok(Outcome { config: Some(cfg), ..Default::default() }
        .model(&SavedModel::Diffusion(trained))?
        .metrics(&recs)
        .say(format!("final batch loss {last}")))
}

fn train_gan(a: &GanArgs, inputs: &mut Inputs) -> Result<Outcome, CliError> {
    let ds = inputs.table(&a.data)?.values;
    let cfg = resolve_config(&a.train, Defaults { lr: 0.05, steps: 10000, batch: 64, mc: 1 }, inputs)?;
    for (name, lr) in [("d-lr", a.d_lr), ("g-lr", a.g_lr)] {
        if let Some(v) = lr {
            require_positive(name, v)?;
        }
    }
    let arch = GanArch {
        latent_dim: a.latent_dim,
        generator_hidden: a.generator_hidden.0.clone(),
        discriminator_hidden: a.discriminator_hidden.0.clone(),
        activation: a.activation.into(),
    };
    let opts = GanOptions { discriminator_lr: a.d_lr, generator_lr: a.g_lr, backtrack_discriminator: a.backtrack };
    let (m, trace) = gan_train(&ds, &arch, &cfg, &opts)?;
    let recs: Vec<_> =
        trace.iter().map(|r| json!({"step": r.step, "d_obj_bits": r.d_obj, "g_obj_bits": r.g_obj})).collect();
    let last = trace.last().map_or(f64::NAN, |r| r.d_obj);
    Ok(Outcome { config: Some(cfg), ..Default::default() }
        .model(&SavedModel::Gan(m))?
        .metrics(&recs)
        .say(format!("final batch value {last} bits")))
}

fn train_score(a: &ScoreArgs, inputs: &mut Inputs) -> Result<Outcome, CliError> {
    let ds = inputs.table(&a.data)?.values;
    let cfg = resolve_config(&a.train, Defaults { lr: 0.02, steps: 20000, batch: 256, mc: 2 }, inputs)?;
    require_positive("noise-variance", a.noise_variance)?;
    let arch = ScoreArch { hidden: a.hidden.0.clone(), activation: a.activation.into(), standardize_input: !a.no_standardize };
    let (m, trace) = dsm_train(&ds, a.noise_variance, &arch, &cfg)?;
    let recs: Vec<_> = trace.iter().enumerate().map(|(i, v)| json!({"step": i, "dsm_loss_nats": v})).collect();
    let last = trace.last().copied().unwrap_or(f64::NAN);
    Ok(Outcome { config: Some(cfg), ..Default::default() }
        .model(&SavedModel::Score(m))?
        .metrics(&recs)
        .say(format!("final batch DSM loss {last} nats")))
}

fn sample(a: &SampleArgs, inputs: &mut Inputs) -> Result<Outcome, CliError> {
    let model = inputs.model(&a.model)?;
    if a.n == 0 {
        return Err(CliError::Usage("n must be at least 1".into()));
    }
    let mut rng = Rng::new(a.seed).substream("cli.sample");
    let seqs = |m: &dyn SequenceModel, rng: &mut Rng| -> Result<Vec<u8>, CliError> {
        let s = (0..a.n).map(|_| sample_ancestral(m, rng, a.length)).collect::<Result<Vec<_>, _>>()?;
        Ok(SequenceDataset::new(s, m.alphabet())?.to_text().into_bytes())
    };
    let (name, bytes) = match &model {
        SavedModel::Markov(m) => ("samples.txt", seqs(m, &mut rng)?),
        SavedModel::NeuralAr(m) => ("samples.txt", seqs(m, &mut rng)?),
        SavedModel::Gmm(m) => ("samples.csv", Table::from_matrix(m.sample(&mut rng, a.n)).to_csv()),
        SavedModel::Ppca(m) => ("samples.csv", Table::from_matrix(m.sample(&mut rng, a.n)).to_csv()),
        SavedModel::Vae(m) => ("samples.csv", Table::from_matrix(m.sample(&mut rng, a.n)?).to_csv()),
        SavedModel::Diffusion(m) => ("samples.csv", Table::from_matrix(m.sample(&mut rng, a.n)?).to_csv()),
        SavedModel::Gan(m) => ("samples.csv", Table::from_matrix(m.sample(&mut rng, a.n)?).to_csv()),
        _ => return Err(CliError::Usage(format!("{} models cannot be sampled", model.schema()))),
    };
    let kind = if name.ends_with(".csv") { "csv" } else { "text" };
    Ok(Outcome::default().file(name, bytes, kind).say(format!("{} samples", a.n)))
}

fn accuracy(ds: &LabeledDataset, predict: impl Fn(&[f64]) -> Result<usize, CliError>) -> Result<f64, CliError> {
    let (labels, _) = ds.class_targets()?;
    let mut hits = 0usize;
    for (i, l) in labels.iter().enumerate() {
        if predict(ds.input(i))? == *l {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, x)| if *x > v[best] { i } else { best })
}

fn evaluate(a: &EvaluateArgs, inputs: &mut Inputs) -> Result<Outcome, CliError> {
    let model = inputs.model(&a.model)?;
    let need_seed = || a.seed.ok_or_else(|| CliError::Usage("this metric needs --seed".into()));
    let unsupported = || CliError::Usage(format!("metric {:?} does not apply to {} models", a.metric, model.schema()));
    let rng = || need_seed().map(|s| Rng::new(s).substream("cli.evaluate"));
    let (value, unit) = match (a.metric, &model) {
        (Metric::Perplexity, SavedModel::Markov(m)) => {
            (perplexity(m, &inputs.sequences(&a.data, Some(m.alphabet()))?)?, "")
        }
        (Metric::Perplexity, SavedModel::NeuralAr(m)) => {
            (perplexity(m, &inputs.sequences(&a.data, Some(m.alphabet()))?)?, "")
        }
        (Metric::Loglik, SavedModel::Markov(m)) => {
            (dataset_loglik(m, &inputs.sequences(&a.data, Some(m.alphabet()))?), "bits")
        }
        (Metric::Loglik, SavedModel::NeuralAr(m)) => {
            (dataset_loglik(m, &inputs.sequences(&a.data, Some(m.alphabet()))?), "bits")
        }
        (Metric::Loglik, SavedModel::Linreg(p)) => (linear_loglik(p, &inputs.table(&a.data)?.regression(&a.target)?)?, "bits"),
        (Metric::Loglik, SavedModel::Logreg(p)) => {
            let classes = if p.is_binary() { 2 } else { p.weights.rows() };
            let ds = inputs.table(&a.data)?.classification(&a.target, Some(classes))?;
            (if p.is_binary() { logistic_loglik(p, &ds)? } else { multiclass_loglik(p, &ds)? }, "bits")
        }
        (Metric::Loglik, SavedModel::Gmm(g)) => (gmm_loglik(g, &inputs.table(&a.data)?.values)?, "nats"),
        (Metric::Loglik, SavedModel::Ppca(p)) => (ppca_loglik(p, &inputs.table(&a.data)?.values)?, "nats"),
        (Metric::Loglik, SavedModel::Mlp(net)) => {
            let ds = mlp_dataset(&inputs.table(&a.data)?, &a.target, head_of(net), Some(net.output_dim().max(2)))?;
            (-net.loss(&ds)?, "nats")
        }
        (Metric::Elbo, SavedModel::Vae(m)) => {
            if a.mc_samples == 0 {
                return Err(CliError::Usage("mc-samples must be positive".into()));
            }
            let data = inputs.table(&a.data)?.values;
            (vae_loss(m, &data, &mut rng()?, a.mc_samples)?.elbo, "nats")
        }
        (Metric::Accuracy, SavedModel::Logreg(p)) => {
            let classes = if p.is_binary() { 2 } else { p.weights.rows() };
            let ds = inputs.table(&a.data)?.classification(&a.target, Some(classes))?;
            (accuracy(&ds, |x| Ok(p.predict_class(x)?))?, "")
        }
        (Metric::Accuracy, SavedModel::Mlp(net)) if net.head() != OutputHead::GaussianRegression => {
            let ds = mlp_dataset(&inputs.table(&a.data)?, &a.target, head_of(net), Some(net.output_dim().max(2)))?;
            let bern = net.head() == OutputHead::Bernoulli;
            (
                accuracy(&ds, |x| {
                    let out = net.predict(x)?;
                    Ok(if bern { usize::from(out[0] > 0.5) } else { argmax(&out) })
                })?,
                "",
            )
        }
        (Metric::Mse, SavedModel::Linreg(p)) => {
            let ds = inputs.table(&a.data)?.regression(&a.target)?;
            (mse(&ds, |x| Ok(predict_linear(p, x)?))?, "")
        }
        (Metric::Mse, SavedModel::Mlp(net)) if net.head() == OutputHead::GaussianRegression => {
            let ds = inputs.table(&a.data)?.regression(&a.target)?;
            (mse(&ds, |x| Ok(net.predict(x)?[0]))?, "")
        }
        (Metric::Dsm, SavedModel::Score(m)) => {
            let data = inputs.table(&a.data)?.values;
            (dsm_objective(m, &data, &mut rng()?, m.noise_variance())?, "nats")
        }
        (Metric::ScoreMse, SavedModel::Score(m)) => {
            let path = a.density.as_ref().ok_or_else(|| CliError::Usage("score-mse needs --density".into()))?;
            let spec: DensitySpec = serde_json::from_str(&inputs.text(path)?)
                .map_err(|e| CliError::Usage(format!("bad density spec: {e}")))?;
            let smoothed = spec.smoothed(m.noise_variance())?.build()?;
            let data = inputs.table(&a.data)?.values;
            let mut total = 0.0;
            for r in 0..data.rows() {
                let y = data.row(r);
                let s = m.score(y)?;
                total += s.iter().zip(score_of(smoothed.as_ref(), y)).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
            }
            (total / data.rows() as f64, "")
        }
        (Metric::Value, SavedModel::Gan(g)) => {
            let data = inputs.table(&a.data)?.values;
            let fake = g.sample(&mut rng()?, data.rows())?;
            (value_function(g.discriminator(), &data, &fake)?, "bits")
        }
        _ => return Err(unsupported()),
    };
    Ok(Outcome::default().say(with_unit(value, unit)))
}

fn head_of(net: &MlpParams) -> Head {
    match net.head() {
        OutputHead::GaussianRegression => Head::Regression,
        OutputHead::Bernoulli => Head::Bernoulli,
        OutputHead::Categorical => Head::Categorical,
    }
}

fn mse(ds: &LabeledDataset, predict: impl Fn(&[f64]) -> Result<f64, CliError>) -> Result<f64, CliError> {
    let y = ds.real_targets()?;
    let mut total = 0.0;
    for (i, yi) in y.iter().enumerate() {
        total += (predict(ds.input(i))? - yi).powi(2);
    }
    Ok(total / y.len() as f64)
}

fn with_unit(v: f64, unit: &str) -> String {
    if unit.is_empty() {
        format!("{v}")
    } else {
        format!("{v} {unit}")
    }
}

fn divergence(a: &DivergenceArgs) -> Result<Outcome, CliError> {
    let p = Pmf::new(a.p.clone())?;
    let q = Pmf::new(a.q.clone())?;
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| CliError::Usage(format!("this spec needs --{flag}")));
    let f = |spec: FDivSpec| -> Result<(f64, &'static str), CliError> {
        let unit = if spec.is_logarithmic() { "bits" } else { "" };
        Ok((f_divergence(&p, &q, &spec)?, unit))
    };
    let (value, unit) = match a.spec {
        DivSpec::Kl => f(FDivSpec::kl())?,
        DivSpec::ReverseKl => f(FDivSpec::reverse_kl())?,
        DivSpec::Tv => f(FDivSpec::tv())?,
        DivSpec::ChiSq => f(FDivSpec::chi_sq())?,
        DivSpec::Js => f(FDivSpec::js())?,
        DivSpec::HellingerSq => f(FDivSpec::hellinger_sq())?,
        DivSpec::HockeyStick => f(FDivSpec::hockey_stick(need(a.gamma, "gamma")?)?)?,
        DivSpec::RenyiGen => f(FDivSpec::renyi_gen(need(a.alpha, "alpha")?)?)?,
        DivSpec::Hellinger => (hellinger(&p, &q)?, ""),
        DivSpec::Renyi => (renyi_divergence(&p, &q, need(a.alpha, "alpha")?)?, "bits"),
        DivSpec::CrossEntropy => (cross_entropy(&p, &q)?, "bits"),
    };
    Ok(Outcome::default().say(with_unit(value, unit)))
}
