//! Denoising diffusion: the forward noising chain, its Gaussian backward
//! posteriors, the denoising objective in mean and noise parameterisations,
//! training and ancestral sampling, and the link to denoising score matching.
//!
//! Steps are 1-based. `α_0 = 1`, so the step-1 posterior mean is `x` itself.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::neuralnet::{Activation, MlpGradients, MlpParams, OutputHead};
use crate::numcore::{DenseMatrix, Rng};

pub const SCHEDULE_SCHEMA: &str = "genlearn.schedule/1";
pub const DENOISER_SCHEMA: &str = "genlearn.denoiser/1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSpec {
    Constant(f64),
    Linear { lo: f64, hi: f64 },
}

/// Noise levels `β_1..β_T` with the cumulative products `α_t = Π (1 − β_τ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleFile", into = "ScheduleFile")]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleFile {
    schema: String,
    steps: usize,
    betas: Vec<f64>,
}

impl TryFrom<ScheduleFile> for DiffusionSchedule {
    type Error = Error;
    fn try_from(f: ScheduleFile) -> Result<Self> {
        if f.schema != SCHEDULE_SCHEMA {
            return Err(Error::Serialization(format!("unsupported schedule schema `{}`", f.schema)));
        }
        if f.steps != f.betas.len() {
            return Err(Error::Serialization("step count does not match the β list".into()));
        }
        DiffusionSchedule::from_betas(f.betas)
    }
}

impl From<DiffusionSchedule> for ScheduleFile {
    fn from(s: DiffusionSchedule) -> Self {
        ScheduleFile { schema: SCHEDULE_SCHEMA.into(), steps: s.betas.len(), betas: s.betas }
    }
}

pub fn make_schedule(steps: usize, spec: BetaSpec) -> Result<DiffusionSchedule> {
    if steps < 2 {
        return Err(Error::InvalidSchedule(format!("need at least 2 steps, got {steps}")));
    }
    let betas = match spec {
        BetaSpec::Constant(b) => vec![b; steps],
        BetaSpec::Linear { lo, hi } => {
            (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
        }
    };
    DiffusionSchedule::from_betas(betas)
}

impl DiffusionSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::InvalidSchedule("need at least 2 steps".into()));
        }
        if let Some((i, b)) = betas.iter().enumerate().find(|(_, b)| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::InvalidSchedule(format!("β_{} = {b} is outside (0, 1)", i + 1)));
        }
        let mut alphas = Vec::with_capacity(betas.len());
        let mut a = 1.0;
        for b in &betas {
            a *= 1.0 - b;
            alphas.push(a);
        }
        Ok(DiffusionSchedule { betas, alphas })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    fn check(&self, t: usize) {
        assert!(t >= 1 && t <= self.steps(), "step {t} outside 1..={}", self.steps());
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.check(t);
        self.betas[t - 1]
    }

    /// `α_t`, with `α_0 = 1`.
    pub fn alpha(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.check(t);
            self.alphas[t - 1]
        }
    }

    /// Reverse-step variance `β′_t = β_t (1 − α_{t−1}) / (1 − α_t)`, and
    /// `β′_1 = β_1`.
    pub fn beta_prime(&self, t: usize) -> f64 {
        if t == 1 {
            self.beta(1)
        } else {
            self.beta(t) * (1.0 - self.alpha(t - 1)) / (1.0 - self.alpha(t))
        }
    }

    /// Variance `σ_t²` of the conditional backward step (zero at `t = 1`).
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.beta(t) * (1.0 - self.alpha(t - 1)) / (1.0 - self.alpha(t))
    }

    /// Coefficients `(c_z, c_x)` of the posterior mean `c_z z_t + c_x x`.
    pub fn posterior_coefficients(&self, t: usize) -> (f64, f64) {
        let (b, a, a_prev) = (self.beta(t), self.alpha(t), self.alpha(t - 1));
        ((1.0 - a_prev) * (1.0 - b).sqrt() / (1.0 - a), a_prev.sqrt() * b / (1.0 - a))
    }

    /// `β_t² / ((1 − α_t)(1 − β_t))`, the factor with `‖m_t − μ_t‖² = c ‖v_t − w‖²`
    /// when `μ_t` is derived from a noise prediction `v_t`.
    pub fn noise_to_mean_scale(&self, t: usize) -> f64 {
        let b = self.beta(t);
        b * b / ((1.0 - self.alpha(t)) * (1.0 - b))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn check_step(s: &DiffusionSchedule, t: usize, lo: usize) -> Result<()> {
    if t < lo || t > s.steps() {
        return Err(invalid(format!("step {t} outside {lo}..={}", s.steps())));
    }
    Ok(())
}

/// `z_t = √α_t x + √(1 − α_t) w`.
pub fn forward_from_noise(s: &DiffusionSchedule, x: &[f64], t: usize, w: &[f64]) -> Vec<f64> {
    let a = s.alpha(t);
    x.iter().zip(w).map(|(x, w)| a.sqrt() * x + (1.0 - a).sqrt() * w).collect()
}

/// Draws `w ~ N(0, I)` and returns `(z_t, w)`.
pub fn forward_marginal(s: &DiffusionSchedule, x: &[f64], t: usize, rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    check_step(s, t, 1)?;
    let w = rng.normal_vec(x.len());
    Ok((forward_from_noise(s, x, t, &w), w))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorParams {
    pub mean: Vec<f64>,
    pub variance: f64,
}

fn posterior_mean(s: &DiffusionSchedule, x: &[f64], z: &[f64], t: usize) -> Vec<f64> {
    let (cz, cx) = s.posterior_coefficients(t);
    z.iter().zip(x).map(|(z, x)| cz * z + cx * x).collect()
}

/// Gaussian law of `Z_{t−1}` given `Z_t = z_t` and `X = x`.
pub fn backward_posterior(s: &DiffusionSchedule, x: &[f64], z_t: &[f64], t: usize) -> Result<PosteriorParams> {
    check_step(s, t, 2)?;
    if x.len() != z_t.len() {
        return Err(invalid("x and z_t differ in length"));
    }
    Ok(PosteriorParams { mean: posterior_mean(s, x, z_t, t), variance: s.posterior_variance(t) })
}

/// What a denoiser emits for `(t, z_t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// The reverse-step mean `μ_t(z_t)`.
    Mean,
    /// The noise estimate `v_t(z_t)`.
    Noise,
}

/// Per-step weight of the squared error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseWeighting {
    /// `‖m_t − μ_t‖²` or `‖v_t − w‖²`.
    #[default]
    Unweighted,
    /// Mean-space weight `1/(2β_t)`; in noise space `β_t / (2(1 − α_t)(1 − β_t))`.
    ForwardVariance,
    /// Mean-space weight `1/(2β′_t)`, the exact KL; in noise space
    /// `β_t / (2(1 − α_{t−1})(1 − β_t))`.
    PosteriorVariance,
}

impl NoiseWeighting {
    /// Multiplier applied to `‖m_t − μ_t‖²`.
    pub fn mean_weight(&self, s: &DiffusionSchedule, t: usize) -> f64 {
        match self {
            NoiseWeighting::Unweighted => 1.0,
            NoiseWeighting::ForwardVariance => 0.5 / s.beta(t),
            NoiseWeighting::PosteriorVariance => 0.5 / s.beta_prime(t),
        }
    }

    /// Multiplier applied to `‖v_t − w‖²`.
    pub fn noise_weight(&self, s: &DiffusionSchedule, t: usize) -> f64 {
        match self {
            NoiseWeighting::Unweighted => 1.0,
            w => w.mean_weight(s, t) * s.noise_to_mean_scale(t),
        }
    }
}

/// A network, or a test oracle, producing the reverse-step prediction.
pub trait Denoiser {
    fn mode(&self) -> PredictionMode;
    fn dim(&self) -> usize;
    fn predict(&self, s: &DiffusionSchedule, t: usize, z: &[f64]) -> Result<Vec<f64>>;
}

/// `μ_t = (z_t − β_t v_t / √(1 − α_t)) / √(1 − β_t)`.
pub fn mean_from_noise(s: &DiffusionSchedule, t: usize, z: &[f64], v: &[f64]) -> Vec<f64> {
    let b = s.beta(t);
    let k = b / (1.0 - s.alpha(t)).sqrt();
    let d = (1.0 - b).sqrt();
    z.iter().zip(v).map(|(z, v)| (z - k * v) / d).collect()
}

/// The reverse-step mean of any denoiser.
pub fn predicted_mean<D: Denoiser + ?Sized>(d: &D, s: &DiffusionSchedule, t: usize, z: &[f64]) -> Result<Vec<f64>> {
    let out = d.predict(s, t, z)?;
    Ok(match d.mode() {
        PredictionMode::Mean => out,
        PredictionMode::Noise => mean_from_noise(s, t, z, &out),
    })
}

/// A noise-predicting denoiser viewed as a mean predictor.
pub struct MeanView<'a, D: ?Sized>(pub &'a D);

impl<D: Denoiser + ?Sized> Denoiser for MeanView<'_, D> {
    fn mode(&self) -> PredictionMode {
        PredictionMode::Mean
    }

    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn predict(&self, s: &DiffusionSchedule, t: usize, z: &[f64]) -> Result<Vec<f64>> {
        predicted_mean(self.0, s, t, z)
    }
}

/// MLP over `(z_t, t/T, √α_t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenoiserFile", into = "DenoiserFile")]
pub struct DenoiserNet {
    net: MlpParams,
    mode: PredictionMode,
}

#[derive(Serialize, Deserialize)]
struct DenoiserFile {
    schema: String,
    mode: PredictionMode,
    net: MlpParams,
}

impl TryFrom<DenoiserFile> for DenoiserNet {
    type Error = Error;
    fn try_from(f: DenoiserFile) -> Result<Self> {
        if f.schema != DENOISER_SCHEMA {
            return Err(Error::Serialization(format!("unsupported denoiser schema `{}`", f.schema)));
        }
        DenoiserNet::new(f.net, f.mode)
    }
}

impl From<DenoiserNet> for DenoiserFile {
    fn from(d: DenoiserNet) -> Self {
        DenoiserFile { schema: DENOISER_SCHEMA.into(), mode: d.mode, net: d.net }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiserArch {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub mode: PredictionMode,
}

impl Default for DenoiserArch {
    fn default() -> Self {
        DenoiserArch { hidden: vec![64], activation: Activation::Relu, mode: PredictionMode::Mean }
    }
}

impl DenoiserNet {
    pub fn new(net: MlpParams, mode: PredictionMode) -> Result<Self> {
        if net.head() != OutputHead::GaussianRegression {
            return Err(invalid("a denoiser needs an identity output layer"));
        }
        if net.input_dim() != net.output_dim() + 2 {
            return Err(invalid("denoiser input must be the data plus a 2-value time embedding"));
        }
        Ok(DenoiserNet { net, mode })
    }

    pub fn init(rng: &mut Rng, dim: usize, arch: &DenoiserArch) -> Result<Self> {
        let net = MlpParams::init(rng, dim + 2, &arch.hidden, arch.activation, dim, OutputHead::GaussianRegression)?;
        Self::new(net, arch.mode)
    }

    pub fn net(&self) -> &MlpParams {
        &self.net
    }

    pub fn input(s: &DiffusionSchedule, t: usize, z: &[f64]) -> Vec<f64> {
        let mut v = z.to_vec();
        v.push(t as f64 / s.steps() as f64);
        v.push(s.alpha(t).sqrt());
        v
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl Denoiser for DenoiserNet {
    fn mode(&self) -> PredictionMode {
        self.mode
    }

    fn dim(&self) -> usize {
        self.net.output_dim()
    }

    fn predict(&self, s: &DiffusionSchedule, t: usize, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(invalid(format!("denoiser expects dimension {}, got {}", self.dim(), z.len())));
        }
        self.net.predict(&Self::input(s, t, z))
    }
}

/// Squared-error denoising objective on frozen noise `w`: mean mode gives
/// `weight · ‖m_t(x, z_t) − μ_t(z_t)‖²`, noise mode `weight · ‖v_t(z_t) − w‖²`.
pub fn denoising_objective<D: Denoiser + ?Sized>(
    d: &D,
    s: &DiffusionSchedule,
    x: &[f64],
    t: usize,
    w: &[f64],
    weighting: NoiseWeighting,
) -> Result<f64> {
    check_step(s, t, 1)?;
    let z = forward_from_noise(s, x, t, w);
    let out = d.predict(s, t, &z)?;
    Ok(match d.mode() {
        PredictionMode::Mean => {
            let m = posterior_mean(s, x, &z, t);
            weighting.mean_weight(s, t) * sq_dist(&m, &out)
        }
        PredictionMode::Noise => weighting.noise_weight(s, t) * sq_dist(&out, w),
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Per-step loss on frozen noise. Steps `t ≥ 2` give the denoising
/// objective; `t = 1` gives the reconstruction term `−ln N(x; μ_1(z_1), β_1 I)`.
pub fn diffusion_loss_with_noise<D: Denoiser + ?Sized>(
    d: &D,
    s: &DiffusionSchedule,
    x: &[f64],
    t: usize,
    w: &[f64],
    weighting: NoiseWeighting,
) -> Result<f64> {
    check_step(s, t, 1)?;
    if t == 1 {
        let z = forward_from_noise(s, x, 1, w);
        let mu = predicted_mean(d, s, 1, &z)?;
        let b = s.beta(1);
        return Ok(sq_dist(x, &mu) / (2.0 * b) + 0.5 * x.len() as f64 * (2.0 * PI * b).ln());
    }
    denoising_objective(d, s, x, t, w, weighting)
}

/// [`diffusion_loss_with_noise`] with `w` drawn from `rng`.
pub fn diffusion_loss<D: Denoiser + ?Sized>(
    d: &D,
    s: &DiffusionSchedule,
    x: &[f64],
    t: usize,
    rng: &mut Rng,
    weighting: NoiseWeighting,
) -> Result<f64> {
    let w = rng.normal_vec(x.len());
    diffusion_loss_with_noise(d, s, x, t, &w, weighting)
}

/// Per-coordinate affine map to zero mean and unit variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(ds: &DenseMatrix) -> Result<Self> {
        let (n, k) = ds.shape();
        if n < 2 {
            return Err(invalid("standardising needs at least two rows"));
        }
        let mean: Vec<f64> = (0..k).map(|c| (0..n).map(|r| ds[(r, c)]).sum::<f64>() / n as f64).collect();
        let scale: Vec<f64> = (0..k)
            .map(|c| ((0..n).map(|r| (ds[(r, c)] - mean[c]).powi(2)).sum::<f64>() / n as f64).sqrt())
            .collect();
        if scale.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid("a data coordinate is constant"));
        }
        Ok(Standardizer { mean, scale })
    }

    pub fn identity(dim: usize) -> Self {
        Standardizer { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    pub fn apply(&self, ds: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(ds.rows(), ds.cols(), |r, c| (ds[(r, c)] - self.mean[c]) / self.scale[c])
    }

    pub fn invert(&self, v: &[f64]) -> Vec<f64> {
        v.iter().enumerate().map(|(c, v)| v * self.scale[c] + self.mean[c]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionTraceRecord {
    pub step: usize,
    pub t: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionOptions {
    pub weighting: NoiseWeighting,
    pub standardize: bool,
}

impl Default for DiffusionOptions {
    fn default() -> Self {
        DiffusionOptions { weighting: NoiseWeighting::Unweighted, standardize: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedDiffusion {
    pub net: DenoiserNet,
    pub schedule: DiffusionSchedule,
    pub standardizer: Standardizer,
    pub trace: Vec<DiffusionTraceRecord>,
}

impl TrainedDiffusion {
    /// `n` samples mapped back to data coordinates.
    pub fn sample(&self, rng: &mut Rng, n: usize) -> Result<DenseMatrix> {
        let k = self.net.dim();
        let mut out = DenseMatrix::zeros(n, k);
        for r in 0..n {
            let x = diffusion_sample(&self.net, &self.schedule, rng)?;
            out.row_mut(r).copy_from_slice(&self.standardizer.invert(&x));
        }
        Ok(out)
    }
}

/// The training loop: for every step draw a batch, one step index `t`
/// uniform on `1..=T`, fresh noise per datum, and descend on the
/// batch-mean denoising objective.
pub fn diffusion_train(
    ds: &DenseMatrix,
    s: &DiffusionSchedule,
    arch: &DenoiserArch,
    cfg: &ExperimentConfig,
    opts: &DiffusionOptions,
) -> Result<TrainedDiffusion> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let net = DenoiserNet::init(&mut root.substream("diffusion.init"), ds.cols(), arch)?;
    diffusion_train_from(net, ds, s, cfg, opts)
}

/// [`diffusion_train`] starting from an existing network.
pub fn diffusion_train_from(
    mut net: DenoiserNet,
    ds: &DenseMatrix,
    s: &DiffusionSchedule,
    cfg: &ExperimentConfig,
    opts: &DiffusionOptions,
) -> Result<TrainedDiffusion> {
    cfg.validate()?;
    if ds.cols() != net.dim() || ds.rows() == 0 {
        return Err(invalid("data dimension does not match the denoiser"));
    }
    let standardizer = if opts.standardize { Standardizer::fit(ds)? } else { Standardizer::identity(ds.cols()) };
    let data = standardizer.apply(ds);
    let root = Rng::new(cfg.seed);
    let mut rng = root.substream("diffusion.train");
    let n = data.rows();
    let bsz = cfg.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut trace = Vec::with_capacity(cfg.max_steps);
    for step in 0..cfg.max_steps {
        let mut batch = Vec::with_capacity(bsz);
        while batch.len() < bsz {
            if cursor == n {
                rng.shuffle(&mut order);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let t = 1 + rng.below(s.steps());
        let mut grads = MlpGradients::zeros_like(&net.net);
        let mut total = 0.0;
        for &i in &batch {
            let x = data.row(i);
            let w = rng.normal_vec(x.len());
            let z = forward_from_noise(s, x, t, &w);
            let (out, cache) = net.net.forward(&DenoiserNet::input(s, t, &z))?;
            let (target, weight) = match net.mode {
                PredictionMode::Mean => (posterior_mean(s, x, &z, t), opts.weighting.mean_weight(s, t)),
                PredictionMode::Noise => (w, opts.weighting.noise_weight(s, t)),
            };
            total += weight * sq_dist(&out, &target);
            let g: Vec<f64> = out.iter().zip(&target).map(|(o, y)| 2.0 * weight * (o - y) / bsz as f64).collect();
            net.net.backprop_output(&cache, &g, &mut grads)?;
        }
        let loss = total / bsz as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss at step {step}")));
        }
        trace.push(DiffusionTraceRecord { step, t, loss });
        net.net.apply_gradient(cfg.learning_rate, &grads);
    }
    Ok(TrainedDiffusion { net, schedule: s.clone(), standardizer, trace })
}

/// Ancestral sampling: `z_T ~ N(0, I)`, `z_{t−1} = μ_t(z_t) + √β′_t u_t`,
/// and finally `x = μ_1(z_1) + √β′_1 u_1`.
pub fn diffusion_sample<D: Denoiser + ?Sized>(d: &D, s: &DiffusionSchedule, rng: &mut Rng) -> Result<Vec<f64>> {
    let mut z = rng.normal_vec(d.dim());
    for t in (1..=s.steps()).rev() {
        let mu = predicted_mean(d, s, t, &z)?;
        let sd = s.beta_prime(t).sqrt();
        z = mu.iter().map(|m| m + sd * rng.normal()).collect();
    }
    Ok(z)
}

/// How a mean predictor is turned into a score estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreBridge {
    /// `m_t = z_t + σ_t² ∇ ln g(z_t | x)`, so `s_θ = (μ_t − z_t)/σ_t²`,
    /// compared without per-step weights.
    Literal,
    /// `m_t = (z_t + β_t ∇ ln g(z_t | x)) / √(1 − β_t)`, so
    /// `s_θ = (√(1 − β_t) μ_t − z_t)/β_t`, compared with weights
    /// `λ_t = β_t (1 − α_t) / ((1 − α_{t−1})(1 − β_t))`.
    Corrected,
}

impl ScoreBridge {
    /// The bridge's expression for `m_t(x, z_t)` through the forward score.
    pub fn posterior_mean(&self, s: &DiffusionSchedule, x: &[f64], z: &[f64], t: usize) -> Vec<f64> {
        let grad = forward_score(s, x, z, t);
        match self {
            ScoreBridge::Literal => {
                let v = s.posterior_variance(t);
                z.iter().zip(&grad).map(|(z, g)| z + v * g).collect()
            }
            ScoreBridge::Corrected => {
                let b = s.beta(t);
                z.iter().zip(&grad).map(|(z, g)| (z + b * g) / (1.0 - b).sqrt()).collect()
            }
        }
    }

    fn score_from_mean(&self, s: &DiffusionSchedule, t: usize, z: &[f64], mu: &[f64]) -> Vec<f64> {
        match self {
            ScoreBridge::Literal => {
                let v = s.posterior_variance(t);
                mu.iter().zip(z).map(|(m, z)| (m - z) / v).collect()
            }
            ScoreBridge::Corrected => {
                let b = s.beta(t);
                mu.iter().zip(z).map(|(m, z)| ((1.0 - b).sqrt() * m - z) / b).collect()
            }
        }
    }

    fn weight(&self, s: &DiffusionSchedule, t: usize) -> f64 {
        match self {
            ScoreBridge::Literal => 1.0,
            ScoreBridge::Corrected => {
                let b = s.beta(t);
                b * (1.0 - s.alpha(t)) / ((1.0 - s.alpha(t - 1)) * (1.0 - b))
            }
        }
    }
}

/// `∇_z ln N(z; √α_t x, (1 − α_t) I) = (√α_t x − z)/(1 − α_t)`.
pub fn forward_score(s: &DiffusionSchedule, x: &[f64], z: &[f64], t: usize) -> Vec<f64> {
    let a = s.alpha(t);
    x.iter().zip(z).map(|(x, z)| (a.sqrt() * x - z) / (1.0 - a)).collect()
}

/// Frozen draws `w[t − 2][j]` for steps `2..=T`.
pub fn draw_probe_noise(s: &DiffusionSchedule, dim: usize, per_step: usize, rng: &mut Rng) -> Vec<Vec<Vec<f64>>> {
    (2..=s.steps()).map(|_| (0..per_step).map(|_| rng.normal_vec(dim)).collect()).collect()
}

/// `Σ_{t≥2} E[‖m_t − μ_t‖² / (2σ_t²)]` in nats, averaged over frozen noise.
pub fn mean_matching_loss<D: Denoiser + ?Sized>(
    d: &D,
    s: &DiffusionSchedule,
    x: &[f64],
    noise: &[Vec<Vec<f64>>],
) -> Result<f64> {
    let mut total = 0.0;
    for (i, ws) in noise.iter().enumerate() {
        let t = i + 2;
        let mut acc = 0.0;
        for w in ws {
            acc += denoising_objective(d, s, x, t, w, NoiseWeighting::PosteriorVariance)?;
        }
        total += acc / ws.len() as f64;
    }
    Ok(total)
}

/// `½ Σ_{t≥2} λ_t E[‖∇ ln g(Z_t | x) − s_θ(Z_t)‖²]` with the score and
/// weights of `bridge`, on the same frozen noise.
pub fn score_matching_loss<D: Denoiser + ?Sized>(
    d: &D,
    s: &DiffusionSchedule,
    x: &[f64],
    noise: &[Vec<Vec<f64>>],
    bridge: ScoreBridge,
) -> Result<f64> {
    let mut total = 0.0;
    for (i, ws) in noise.iter().enumerate() {
        let t = i + 2;
        let mut acc = 0.0;
        for w in ws {
            let z = forward_from_noise(s, x, t, w);
            let mu = predicted_mean(d, s, t, &z)?;
            let score = bridge.score_from_mean(s, t, &z, &mu);
            acc += sq_dist(&forward_score(s, x, &z, t), &score);
        }
        total += 0.5 * bridge.weight(s, t) * acc / ws.len() as f64;
    }
    Ok(total)
}

/// Mean-matching loss minus the score-matching loss under `bridge`.
pub fn elbo_score_gap<D: Denoiser + ?Sized>(
    d: &D,
    s: &DiffusionSchedule,
    x: &[f64],
    noise: &[Vec<Vec<f64>>],
    bridge: ScoreBridge,
) -> Result<f64> {
    Ok(mean_matching_loss(d, s, x, noise)? - score_matching_loss(d, s, x, noise, bridge)?)
}

/// Terms of `ln f_θ(x) − ELBO` for a one-dimensional model with affine
/// reverse means `μ_t(z) = a_t z + b_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GapTerms {
    /// `D(g(z_T | x) ‖ f_θ(z_T))`.
    pub prior: f64,
    /// `E D(g(z_{t−1} | z_t, x) ‖ f_θ(z_{t−1} | z_t))` for `t = 2..=T`.
    pub denoising: Vec<f64>,
    /// `E[ln f_θ(x) − ln f_θ(x | Z_1)]`.
    pub reconstruction: f64,
    /// `ln f_θ(x)`.
    pub log_likelihood: f64,
}

impl GapTerms {
    pub fn total(&self) -> f64 {
        self.prior + self.denoising.iter().sum::<f64>() + self.reconstruction
    }

    /// `ln f_θ(x) − total()`.
    pub fn elbo(&self) -> f64 {
        self.log_likelihood - self.total()
    }
}

/// Evaluates every group of the gap decomposition in closed form.
/// `coeffs[t − 1] = (a_t, b_t)`.
pub fn linear_gaussian_gap(s: &DiffusionSchedule, coeffs: &[(f64, f64)], x: f64) -> Result<GapTerms> {
    let n = s.steps();
    if coeffs.len() != n {
        return Err(invalid("need one affine map per step"));
    }
    let a_t = s.alpha(n);
    let (m, v) = (a_t.sqrt() * x, 1.0 - a_t);
    let prior = 0.5 * (m * m + v - 1.0 - v.ln());
    let mut denoising = Vec::with_capacity(n - 1);
    for t in 2..=n {
        let (cz, cx) = s.posterior_coefficients(t);
        let (a, b) = coeffs[t - 1];
        let (mz, vz) = (s.alpha(t).sqrt() * x, 1.0 - s.alpha(t));
        let slope = cz - a;
        let offset = cx * x - b;
        let sq = (slope * mz + offset).powi(2) + slope * slope * vz;
        denoising.push(sq / (2.0 * s.posterior_variance(t)));
    }
    let (mut mean, mut var) = (0.0, 1.0);
    for t in (1..=n).rev() {
        let (a, b) = coeffs[t - 1];
        mean = a * mean + b;
        var = a * a * var + s.beta_prime(t);
    }
    let log_likelihood = -0.5 * ((2.0 * PI * var).ln() + (x - mean).powi(2) / var);
    let (a1, b1) = coeffs[0];
    let (m1, v1) = (s.alpha(1).sqrt() * x, 1.0 - s.alpha(1));
    let b = s.beta_prime(1);
    let expected_sq = (x - a1 * m1 - b1).powi(2) + a1 * a1 * v1;
    let reconstruction = log_likelihood + 0.5 * (2.0 * PI * b).ln() + expected_sq / (2.0 * b);
    Ok(GapTerms { prior, denoising, reconstruction, log_likelihood })
}
