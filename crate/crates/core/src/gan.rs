//! Generative adversarial networks: the two-player value function, the
//! alternating ascent/descent loop, and the optimal-discriminator analysis
//! on discrete distributions. Values are reported in bits.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::divergence::{game_value, kl_divergence, GameSpec, Pmf};
use crate::error::{invalid, Error, Result};
use crate::neuralnet::{Activation, ForwardCache, MlpGradients, MlpParams, OutputHead};
use crate::numcore::{sigmoid, DenseMatrix, Rng};
use crate::regression::ln_sigmoid;

pub const GAN_SCHEMA: &str = "genlearn.gan/1";

/// Bounds applied to discriminator outputs before taking logs in training.
pub const D_CLAMP: (f64, f64) = (1e-6, 1.0 - 1e-6);

/// `mean log₂ d_data + mean log₂(1 − d_model)` from discriminator outputs.
/// Outputs of exactly 0 or 1 give `−∞` where the log vanishes.
pub fn value_from_probs(d_data: &[f64], d_model: &[f64]) -> Result<f64> {
    if d_data.is_empty() || d_model.is_empty() {
        return Err(invalid("value function needs non-empty batches"));
    }
    if d_data.iter().chain(d_model).any(|p| !(0.0..=1.0).contains(p)) {
        return Err(invalid("discriminator outputs must lie in [0, 1]"));
    }
    let a = d_data.iter().map(|p| p.log2()).sum::<f64>() / d_data.len() as f64;
    let b = d_model.iter().map(|p| (1.0 - p).log2()).sum::<f64>() / d_model.len() as f64;
    Ok(a + b)
}

fn logit(disc: &MlpParams, x: &[f64]) -> Result<(f64, ForwardCache)> {
    let (_, cache) = disc.forward(x)?;
    let a = cache.logits()[0];
    Ok((a, cache))
}

/// Empirical value function of a network discriminator, in bits. Logs are
/// taken from the logit, so no saturation occurs for finite weights.
pub fn value_function(disc: &MlpParams, data: &DenseMatrix, model: &DenseMatrix) -> Result<f64> {
    if data.rows() == 0 || model.rows() == 0 {
        return Err(invalid("value function needs non-empty batches"));
    }
    let mut a = 0.0;
    for r in 0..data.rows() {
        a += ln_sigmoid(logit(disc, data.row(r))?.0);
    }
    let mut b = 0.0;
    for r in 0..model.rows() {
        b += ln_sigmoid(-logit(disc, model.row(r))?.0);
    }
    Ok((a / data.rows() as f64 + b / model.rows() as f64) / LN_2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GanFile", into = "GanFile")]
pub struct GanModel {
    generator: MlpParams,
    discriminator: MlpParams,
}

#[derive(Serialize, Deserialize)]
struct GanFile {
    schema: String,
    latent_dim: usize,
    generator: MlpParams,
    discriminator: MlpParams,
}

impl TryFrom<GanFile> for GanModel {
    type Error = Error;
    fn try_from(f: GanFile) -> Result<Self> {
        if f.schema != GAN_SCHEMA {
            return Err(Error::Serialization(format!("unsupported gan schema `{}`", f.schema)));
        }
        if f.latent_dim != f.generator.input_dim() {
            return Err(Error::Serialization("latent width does not match the generator".into()));
        }
        GanModel::new(f.generator, f.discriminator)
    }
}

impl From<GanModel> for GanFile {
    fn from(m: GanModel) -> Self {
        GanFile {
            schema: GAN_SCHEMA.into(),
            latent_dim: m.generator.input_dim(),
            generator: m.generator,
            discriminator: m.discriminator,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanArch {
    pub latent_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub activation: Activation,
}

impl GanArch {
    pub fn new(latent_dim: usize) -> Self {
        GanArch { latent_dim, generator_hidden: vec![16], discriminator_hidden: vec![16], activation: Activation::Relu }
    }
}

impl GanModel {
    pub fn new(generator: MlpParams, discriminator: MlpParams) -> Result<Self> {
        if generator.head() != OutputHead::GaussianRegression {
            return Err(invalid("the generator needs an identity output layer"));
        }
        if discriminator.head() != OutputHead::Bernoulli {
            return Err(invalid("the discriminator needs a logistic output"));
        }
        if generator.output_dim() != discriminator.input_dim() {
            return Err(invalid("generator output and discriminator input widths differ"));
        }
        Ok(GanModel { generator, discriminator })
    }

    pub fn init(rng: &mut Rng, data_dim: usize, arch: &GanArch) -> Result<Self> {
        let g = MlpParams::init(rng, arch.latent_dim, &arch.generator_hidden, arch.activation, data_dim, OutputHead::GaussianRegression)?;
        let d = MlpParams::init(rng, data_dim, &arch.discriminator_hidden, arch.activation, 1, OutputHead::Bernoulli)?;
        Self::new(g, d)
    }

    pub fn generator(&self) -> &MlpParams {
        &self.generator
    }

    pub fn discriminator(&self) -> &MlpParams {
        &self.discriminator
    }

    pub fn latent_dim(&self) -> usize {
        self.generator.input_dim()
    }

    pub fn data_dim(&self) -> usize {
        self.generator.output_dim()
    }

    pub fn generate(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.generator.predict(z)
    }

    pub fn sample(&self, rng: &mut Rng, n: usize) -> Result<DenseMatrix> {
        let mut out = DenseMatrix::zeros(n, self.data_dim());
        for r in 0..n {
            let x = self.generate(&rng.normal_vec(self.latent_dim()))?;
            out.row_mut(r).copy_from_slice(&x);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `(log d, ∂ log d/∂a)` with `d = sigmoid(a)` clamped to [`D_CLAMP`]; the
/// derivative is zero where the clamp is active. Natural log.
fn clamped_log(a: f64, positive: bool) -> (f64, f64) {
    let p = sigmoid(a).clamp(D_CLAMP.0, D_CLAMP.1);
    let v = if positive { p } else { 1.0 - p };
    let active = sigmoid(a) < D_CLAMP.0 || sigmoid(a) > D_CLAMP.1;
    let g = match (active, positive) {
        (true, _) => 0.0,
        (false, true) => 1.0 - p,
        (false, false) => -p,
    };
    (v.ln(), g)
}

/// Discriminator objective `mean log d(x) + mean log(1 − d(x̃))` (nats, with
/// clamping) and the gradient of its negation.
pub fn discriminator_objective(disc: &MlpParams, data: &DenseMatrix, fake: &DenseMatrix) -> Result<(f64, MlpGradients)> {
    let mut grads = MlpGradients::zeros_like(disc);
    let mut obj = 0.0;
    for (batch, positive) in [(data, true), (fake, false)] {
        let n = batch.rows() as f64;
        for r in 0..batch.rows() {
            let (a, cache) = logit(disc, batch.row(r))?;
            let (v, g) = clamped_log(a, positive);
            obj += v / n;
            if g != 0.0 {
                disc.backprop_preactivation(&cache, &[-g / n], &mut grads)?;
            }
        }
    }
    Ok((obj, grads))
}

/// Generator objective `mean log(1 − d(g(z)))` (nats, with clamping) and its
/// gradient with respect to the generator weights.
pub fn generator_objective(model: &GanModel, z: &DenseMatrix) -> Result<(f64, MlpGradients)> {
    let mut grads = MlpGradients::zeros_like(&model.generator);
    let mut scratch = MlpGradients::zeros_like(&model.discriminator);
    let n = z.rows() as f64;
    let mut obj = 0.0;
    for r in 0..z.rows() {
        let (x, gcache) = model.generator.forward(z.row(r))?;
        let (a, dcache) = logit(&model.discriminator, &x)?;
        let (v, g) = clamped_log(a, false);
        obj += v / n;
        if g != 0.0 {
            let dx = model.discriminator.backprop_preactivation(&dcache, &[g / n], &mut scratch)?;
            model.generator.backprop_output(&gcache, &dx, &mut grads)?;
        }
    }
    Ok((obj, grads))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanOptions {
    /// Discriminator rate; `None` uses `cfg.learning_rate`.
    pub discriminator_lr: Option<f64>,
    /// Generator rate; `None` uses `cfg.learning_rate`.
    pub generator_lr: Option<f64>,
    /// Halve the discriminator step until its objective does not decrease.
    pub backtrack_discriminator: bool,
}

impl Default for GanOptions {
    fn default() -> Self {
        GanOptions { discriminator_lr: None, generator_lr: None, backtrack_discriminator: false }
    }
}

/// Objectives in bits recorded at one step, before the updates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimaxRecord {
    pub step: usize,
    pub d_obj: f64,
    pub g_obj: f64,
}

pub type MinimaxTrace = Vec<MinimaxRecord>;

fn latent_batch(rng: &mut Rng, n: usize, k: usize) -> DenseMatrix {
    let mut z = DenseMatrix::zeros(n, k);
    for r in 0..n {
        z.row_mut(r).copy_from_slice(&rng.normal_vec(k));
    }
    z
}

fn generate_batch(model: &GanModel, z: &DenseMatrix) -> Result<DenseMatrix> {
    let mut out = DenseMatrix::zeros(z.rows(), model.data_dim());
    for r in 0..z.rows() {
        out.row_mut(r).copy_from_slice(&model.generate(z.row(r))?);
    }
    Ok(out)
}

/// One ascent step for the discriminator on a fresh latent batch, then one
/// descent step for the generator on another fresh latent batch.
pub fn gan_train_step(
    model: &GanModel,
    data: &DenseMatrix,
    rng: &mut Rng,
    cfg: &ExperimentConfig,
    opts: &GanOptions,
) -> Result<(GanModel, MinimaxRecord)> {
    if data.rows() == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    if data.cols() != model.data_dim() {
        return Err(invalid("batch width does not match the model"));
    }
    let k = model.latent_dim();
    let n = data.rows();
    let mut next = model.clone();

    let fake = generate_batch(model, &latent_batch(rng, n, k))?;
    let (d_obj, dg) = discriminator_objective(&model.discriminator, data, &fake)?;
    if !d_obj.is_finite() || !dg.max_abs().is_finite() {
        return Err(Error::Diverged("non-finite discriminator gradient".into()));
    }
    let mut lr = opts.discriminator_lr.unwrap_or(cfg.learning_rate);
    loop {
        let mut cand = model.discriminator.clone();
        cand.apply_gradient(lr, &dg);
        if !opts.backtrack_discriminator || lr == 0.0 {
            next.discriminator = cand;
            break;
        }
        let (after, _) = discriminator_objective(&cand, data, &fake)?;
        if after >= d_obj || lr < 1e-12 {
            next.discriminator = if after >= d_obj { cand } else { model.discriminator.clone() };
            break;
        }
        lr *= 0.5;
    }

    let z = latent_batch(rng, n, k);
    let (g_obj, gg) = generator_objective(&next, &z)?;
    if !g_obj.is_finite() || !gg.max_abs().is_finite() {
        return Err(Error::Diverged("non-finite generator gradient".into()));
    }
    next.generator.apply_gradient(opts.generator_lr.unwrap_or(cfg.learning_rate), &gg);
    Ok((next, MinimaxRecord { step: 0, d_obj: d_obj / LN_2, g_obj: g_obj / LN_2 }))
}

/// `cfg.max_steps` alternating steps over shuffled mini-batches of `ds`.
pub fn gan_train(ds: &DenseMatrix, arch: &GanArch, cfg: &ExperimentConfig, opts: &GanOptions) -> Result<(GanModel, MinimaxTrace)> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let model = GanModel::init(&mut root.substream("gan.init"), ds.cols(), arch)?;
    gan_train_from(model, ds, cfg, opts)
}

/// [`gan_train`] starting from an existing model.
pub fn gan_train_from(mut model: GanModel, ds: &DenseMatrix, cfg: &ExperimentConfig, opts: &GanOptions) -> Result<(GanModel, MinimaxTrace)> {
    cfg.validate()?;
    if ds.rows() == 0 || ds.cols() != model.data_dim() {
        return Err(invalid("data width does not match the model"));
    }
    let root = Rng::new(cfg.seed);
    let mut batches = root.substream("gan.batches");
    let mut noise = root.substream("gan.noise");
    let n = ds.rows();
    let bsz = cfg.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut trace = Vec::with_capacity(cfg.max_steps);
    for step in 0..cfg.max_steps {
        let mut idx = Vec::with_capacity(bsz);
        while idx.len() < bsz {
            if cursor == n {
                batches.shuffle(&mut order);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let batch = ds.select_rows(&idx);
        let (next, mut rec) = gan_train_step(&model, &batch, &mut noise, cfg, opts).map_err(|e| match e {
            Error::Diverged(m) => Error::Diverged(format!("{m} at step {step}")),
            other => other,
        })?;
        rec.step = step;
        model = next;
        trace.push(rec);
    }
    Ok((model, trace))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalDiscriminatorReport {
    /// `d*(x) = p(x)/(p(x) + q(x))`.
    pub d_star: Vec<f64>,
    /// Value of the game at `d*`, in bits.
    pub value: f64,
    /// `D(p‖m) + D(q‖m) − 2` with `m = (p + q)/2`, in bits.
    pub divergence_form: f64,
    /// Largest `|p/d − q/(1 − d)|` at interior points of `d*`.
    pub stationarity_residual: f64,
}

pub fn optimal_discriminator_check(p: &Pmf, q: &Pmf) -> Result<OptimalDiscriminatorReport> {
    let (value, d_star) = game_value(p, q, &GameSpec::GanLog)?;
    let m = Pmf::new(p.probs().iter().zip(q.probs()).map(|(a, b)| 0.5 * (a + b)).collect())?;
    let divergence_form = kl_divergence(p, &m)? + kl_divergence(q, &m)? - 2.0;
    let stationarity_residual = p
        .probs()
        .iter()
        .zip(q.probs())
        .zip(&d_star)
        .filter(|(_, d)| **d > 0.0 && **d < 1.0)
        .map(|((a, b), d)| (a / d - b / (1.0 - d)).abs())
        .fold(0.0, f64::max);
    Ok(OptimalDiscriminatorReport { d_star, value, divergence_form, stationarity_residual })
}
