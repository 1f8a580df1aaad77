//! Score functions, Fisher divergence, denoising score matching and
//! Tweedie's formula. All logarithms are natural.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::neuralnet::{Activation, MlpGradients, MlpParams, OutputHead};
use crate::numcore::{finite_diff_grad, log_sum_exp, quad_1d, simpson_2d, sq_norm, DenseMatrix, Rng};

pub const SCORE_SCHEMA: &str = "genlearn.score/1";

/// Step of the central differences used when no analytic score exists.
pub const SCORE_FD_STEP: f64 = 1e-5;

/// Refinement disagreement beyond which quadrature is reported as failed.
pub const QUAD_TOLERANCE: f64 = 1e-4;

/// A density on `ℝ^K` known through its log-density.
pub trait Density {
    fn dim(&self) -> usize;

    /// `ln f(x)`, `−∞` outside the support.
    fn log_density(&self, x: &[f64]) -> f64;

    fn analytic_score(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Per-coordinate truncation interval used for quadrature.
    fn bounds(&self) -> Vec<(f64, f64)>;
}

/// `N(μ, σ²I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianDensity {
    mean: Vec<f64>,
    variance: f64,
}

impl GaussianDensity {
    pub fn new(mean: Vec<f64>, variance: f64) -> Result<Self> {
        if mean.is_empty() || mean.iter().any(|m| !m.is_finite()) {
            return Err(invalid("gaussian mean must be non-empty and finite"));
        }
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(invalid("gaussian variance must be positive"));
        }
        Ok(GaussianDensity { mean, variance })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Law of `X + Z` with `Z ~ N(0, σ²I)` independent.
    pub fn smoothed(&self, noise_variance: f64) -> Result<Self> {
        Self::new(self.mean.clone(), self.variance + noise_variance)
    }
}

impl Density for GaussianDensity {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(&self.mean).map(|(a, m)| (a - m).powi(2)).sum();
        -0.5 * d2 / self.variance - 0.5 * self.mean.len() as f64 * (2.0 * PI * self.variance).ln()
    }

    fn analytic_score(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(x.iter().zip(&self.mean).map(|(a, m)| -(a - m) / self.variance).collect())
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let r = 8.0 * self.variance.sqrt();
        self.mean.iter().map(|m| (m - r, m + r)).collect()
    }
}

/// `Σ_j π_j N(μ_j, σ_j² I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureDensity {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl MixtureDensity {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != variances.len() {
            return Err(invalid("mixture needs matching non-empty weights, means and variances"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid("mixture weights must be non-negative and sum to 1"));
        }
        let k = means[0].len();
        if k == 0 || means.iter().any(|m| m.len() != k || m.iter().any(|v| !v.is_finite())) {
            return Err(invalid("mixture means must share a positive dimension"));
        }
        if variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(invalid("mixture variances must be positive"));
        }
        Ok(MixtureDensity { weights, means, variances })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn smoothed(&self, noise_variance: f64) -> Result<Self> {
        Self::new(self.weights.clone(), self.means.clone(), self.variances.iter().map(|v| v + noise_variance).collect())
    }

    fn joint_logs(&self, x: &[f64]) -> Vec<f64> {
        let k = x.len() as f64;
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, m), v)| {
                let d2: f64 = x.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum();
                w.ln() - 0.5 * d2 / v - 0.5 * k * (2.0 * PI * v).ln()
            })
            .collect()
    }
}

impl Density for MixtureDensity {
    fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        log_sum_exp(&self.joint_logs(x))
    }

    fn analytic_score(&self, x: &[f64]) -> Option<Vec<f64>> {
        let logs = self.joint_logs(x);
        let lse = log_sum_exp(&logs);
        if !lse.is_finite() {
            return None;
        }
        let mut s = vec![0.0; x.len()];
        for ((l, m), v) in logs.iter().zip(&self.means).zip(&self.variances) {
            let r = (l - lse).exp();
            for (si, (a, b)) in s.iter_mut().zip(x.iter().zip(m)) {
                *si -= r * (a - b) / v;
            }
        }
        Some(s)
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let r = 8.0 * self.variances.iter().cloned().fold(0.0, f64::max).sqrt();
        (0..self.dim())
            .map(|i| {
                let lo = self.means.iter().map(|m| m[i]).fold(f64::INFINITY, f64::min);
                let hi = self.means.iter().map(|m| m[i]).fold(f64::NEG_INFINITY, f64::max);
                (lo - r, hi + r)
            })
            .collect()
    }
}

/// One-dimensional `f(x) = e^{φ(x)}/Z` with polynomial `φ(x) = Σ c_k x^k`.
/// `Z` is found by quadrature over `bounds`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyPolyDensity {
    coeffs: Vec<f64>,
    bounds: (f64, f64),
    log_partition: f64,
}

impl EnergyPolyDensity {
    pub fn new(coeffs: Vec<f64>, bounds: (f64, f64)) -> Result<Self> {
        let deg = coeffs.iter().rposition(|c| *c != 0.0).unwrap_or(0);
        if deg == 0 || deg % 2 == 1 || coeffs[deg] >= 0.0 || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("energy polynomial needs even degree and a negative leading coefficient"));
        }
        if !(bounds.0 < bounds.1) || !bounds.0.is_finite() || !bounds.1.is_finite() {
            return Err(invalid("energy density needs a finite truncation interval"));
        }
        let mut d = EnergyPolyDensity { coeffs, bounds, log_partition: 0.0 };
        let n = 20_000;
        let peak = (0..=n)
            .map(|i| d.energy(bounds.0 + (bounds.1 - bounds.0) * i as f64 / n as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        let z = quad_1d(|x| (d.energy(x) - peak).exp(), bounds.0, bounds.1, n)?;
        d.log_partition = peak + z.ln();
        Ok(d)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// `φ(x)`.
    pub fn energy(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// `φ′(x)`.
    pub fn energy_derivative(&self, x: f64) -> f64 {
        self.coeffs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, c)| acc * x + k as f64 * c)
    }

    /// Same density with `φ` replaced by `φ + c`.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] += c;
        Self::new(coeffs, self.bounds)
    }
}

impl Density for EnergyPolyDensity {
    fn dim(&self) -> usize {
        1
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.energy(x[0]) - self.log_partition
    }

    fn analytic_score(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![self.energy_derivative(x[0])])
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![self.bounds]
    }
}

/// Law of `Y = aX` for `X ~ base`.
pub struct ScaledDensity<'a> {
    base: &'a dyn Density,
    a: f64,
}

impl<'a> ScaledDensity<'a> {
    pub fn new(base: &'a dyn Density, a: f64) -> Result<Self> {
        if a == 0.0 || !a.is_finite() {
            return Err(invalid("scale factor must be finite and non-zero"));
        }
        Ok(ScaledDensity { base, a })
    }

    fn preimage(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v / self.a).collect()
    }
}

impl Density for ScaledDensity<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        self.base.log_density(&self.preimage(y)) - y.len() as f64 * self.a.abs().ln()
    }

    fn analytic_score(&self, y: &[f64]) -> Option<Vec<f64>> {
        self.base.analytic_score(&self.preimage(y)).map(|s| s.iter().map(|v| v / self.a).collect())
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        self.base
            .bounds()
            .iter()
            .map(|(lo, hi)| {
                let (p, q) = (lo * self.a, hi * self.a);
                (p.min(q), p.max(q))
            })
            .collect()
    }
}

/// Serializable density description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DensitySpec {
    Gaussian { mean: Vec<f64>, variance: f64 },
    Mixture { weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64> },
    EnergyPoly { coeffs: Vec<f64>, bounds: (f64, f64) },
}

impl DensitySpec {
    pub fn build(&self) -> Result<Box<dyn Density>> {
        Ok(match self {
            DensitySpec::Gaussian { mean, variance } => Box::new(GaussianDensity::new(mean.clone(), *variance)?),
            DensitySpec::Mixture { weights, means, variances } => {
                Box::new(MixtureDensity::new(weights.clone(), means.clone(), variances.clone())?)
            }
            DensitySpec::EnergyPoly { coeffs, bounds } => Box::new(EnergyPolyDensity::new(coeffs.clone(), *bounds)?),
        })
    }

    /// Law of the observation after adding `N(0, σ²I)` noise. Energy
    /// densities have no closed form and are rejected.
    pub fn smoothed(&self, noise_variance: f64) -> Result<DensitySpec> {
        if !(noise_variance >= 0.0) {
            return Err(invalid("noise variance must be non-negative"));
        }
        match self {
            DensitySpec::Gaussian { mean, variance } => Ok(DensitySpec::Gaussian { mean: mean.clone(), variance: variance + noise_variance }),
            DensitySpec::Mixture { weights, means, variances } => Ok(DensitySpec::Mixture {
                weights: weights.clone(),
                means: means.clone(),
                variances: variances.iter().map(|v| v + noise_variance).collect(),
            }),
            DensitySpec::EnergyPoly { .. } => Err(invalid("smoothing of energy densities is not supported")),
        }
    }
}

/// `∇ ln f(x)`, zero where `f(x) = 0`.
pub fn score_of(d: &dyn Density, x: &[f64]) -> Vec<f64> {
    if d.log_density(x) == f64::NEG_INFINITY {
        return vec![0.0; x.len()];
    }
    d.analytic_score(x).unwrap_or_else(|| finite_diff_grad(|v| d.log_density(v), x, SCORE_FD_STEP))
}

/// `∫ f(x) h(x) dx` over the truncation box of `f`, checked by one grid
/// refinement.
fn expect_under(f: &dyn Density, h: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let b = f.bounds();
    let integrand = |x: &[f64]| {
        let l = f.log_density(x);
        if l == f64::NEG_INFINITY {
            0.0
        } else {
            l.exp() * h(x)
        }
    };
    let (coarse, fine) = match b.len() {
        1 => {
            let g = |x: f64| integrand(&[x]);
            (quad_1d(g, b[0].0, b[0].1, 2048)?, quad_1d(g, b[0].0, b[0].1, 4096)?)
        }
        2 => {
            let g = |x: f64, y: f64| integrand(&[x, y]);
            (simpson_2d(g, b[0], b[1], 128)?, simpson_2d(g, b[0], b[1], 256)?)
        }
        k => return Err(invalid(format!("quadrature supports 1 or 2 dimensions, got {k}"))),
    };
    let difference = (fine - coarse).abs();
    if !(difference <= QUAD_TOLERANCE) {
        return Err(Error::AccuracyFailure { difference });
    }
    Ok(fine)
}

/// `½ ∫ f ‖s_f − s_g‖²` by quadrature over the truncation box of `f`.
pub fn fisher_divergence(f: &dyn Density, g: &dyn Density) -> Result<f64> {
    if f.dim() != g.dim() {
        return Err(invalid("densities have different dimensions"));
    }
    expect_under(f, |x| {
        let a = score_of(f, x);
        let b = score_of(g, x);
        0.5 * a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>()
    })
}

/// `½ E_f ‖X + ∇ ln f(X)‖²`, the Fisher divergence to `N(0, I)` written
/// without the standard-normal score.
pub fn fisher_to_standard_normal(f: &dyn Density) -> Result<f64> {
    expect_under(f, |x| {
        let s = score_of(f, x);
        0.5 * x.iter().zip(&s).map(|(a, b)| (a + b).powi(2)).sum::<f64>()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub a: f64,
    /// `D_F(f‖g)` in the original coordinates.
    pub original: f64,
    /// `D_F` between the laws of `aX` under `f` and `g`.
    pub scaled: f64,
    pub difference: f64,
}

impl ScalingReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.difference <= tol
    }
}

/// Compares the Fisher divergence of the scaled laws with `D_F(f‖g)/a²`.
pub fn fisher_scaling_check(f: &dyn Density, g: &dyn Density, a: f64) -> Result<ScalingReport> {
    let fy = ScaledDensity::new(f, a)?;
    let gy = ScaledDensity::new(g, a)?;
    let original = fisher_divergence(f, g)?;
    let scaled = fisher_divergence(&fy, &gy)?;
    Ok(ScalingReport { a, original, scaled, difference: (scaled - original / (a * a)).abs() })
}

/// `y + σ² ∇ ln f_Y(y)`: the posterior mean of `X` given `Y = y` when
/// `Y = X + N(0, σ²I)` and `f_Y` is the law of `Y`.
pub fn tweedie_estimate(f_y: &dyn Density, y: &[f64], noise_variance: f64) -> Result<Vec<f64>> {
    if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
        return Err(invalid("noise variance must be non-negative"));
    }
    if y.len() != f_y.dim() {
        return Err(invalid("observation dimension does not match the density"));
    }
    if noise_variance == 0.0 {
        return Ok(y.to_vec());
    }
    Ok(y.iter().zip(score_of(f_y, y)).map(|(a, s)| a + noise_variance * s).collect())
}

/// Anything that maps a point to a score vector.
pub trait ScoreFn {
    fn score(&self, y: &[f64]) -> Result<Vec<f64>>;
}

impl<F: Fn(&[f64]) -> Vec<f64>> ScoreFn for F {
    fn score(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self(y))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreArch {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Feed `(y − mean)/sd` of the training data to the network.
    pub standardize_input: bool,
}

impl Default for ScoreArch {
    fn default() -> Self {
        ScoreArch { hidden: vec![32], activation: Activation::Logistic, standardize_input: true }
    }
}

/// `s_θ(y) = net((y − shift)/scale)` for noise level `σ²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScoreFile", into = "ScoreFile")]
pub struct ScoreModel {
    net: MlpParams,
    shift: Vec<f64>,
    scale: Vec<f64>,
    noise_variance: f64,
}

#[derive(Serialize, Deserialize)]
struct ScoreFile {
    schema: String,
    noise_variance: f64,
    shift: Vec<f64>,
    scale: Vec<f64>,
    net: MlpParams,
}

impl TryFrom<ScoreFile> for ScoreModel {
    type Error = Error;
    fn try_from(f: ScoreFile) -> Result<Self> {
        if f.schema != SCORE_SCHEMA {
            return Err(Error::Serialization(format!("unsupported score schema `{}`", f.schema)));
        }
        ScoreModel::new(f.net, f.shift, f.scale, f.noise_variance)
    }
}

impl From<ScoreModel> for ScoreFile {
    fn from(m: ScoreModel) -> Self {
        ScoreFile { schema: SCORE_SCHEMA.into(), noise_variance: m.noise_variance, shift: m.shift, scale: m.scale, net: m.net }
    }
}

impl ScoreModel {
    pub fn new(net: MlpParams, shift: Vec<f64>, scale: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let k = net.input_dim();
        if net.output_dim() != k || net.head() != OutputHead::GaussianRegression {
            return Err(invalid("score network must map ℝ^K to ℝ^K with an identity output"));
        }
        if shift.len() != k || scale.len() != k || scale.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid("input normalisation does not match the network"));
        }
        if !(noise_variance > 0.0) || !noise_variance.is_finite() {
            return Err(invalid("noise variance must be positive"));
        }
        Ok(ScoreModel { net, shift, scale, noise_variance })
    }

    pub fn net(&self) -> &MlpParams {
        &self.net
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn dim(&self) -> usize {
        self.net.input_dim()
    }

    fn input(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.shift).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl ScoreFn for ScoreModel {
    fn score(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.net.predict(&self.input(y))
    }
}

fn check_noise(x: &DenseMatrix, noise: &DenseMatrix, noise_variance: f64) -> Result<()> {
    if !(noise_variance > 0.0) || !noise_variance.is_finite() {
        return Err(invalid("noise variance must be positive"));
    }
    if x.rows() == 0 || x.cols() != noise.cols() || noise.rows() % x.rows() != 0 || noise.rows() == 0 {
        return Err(invalid("noise must hold a whole number of draws per data row"));
    }
    Ok(())
}

/// Standard-normal draws for [`dsm_objective_with_noise`]; `per_row` draws
/// per data row, stored row-major by draw then data row.
pub fn draw_dsm_noise(x: &DenseMatrix, per_row: usize, rng: &mut Rng) -> DenseMatrix {
    DenseMatrix::from_fn(x.rows() * per_row, x.cols(), |_, _| rng.normal())
}

/// `½ mean ‖(x − y)/σ² − s(y)‖²` with `y = x + σε` for the supplied `ε`.
/// Row `r` of `noise` corrupts data row `r mod n`.
pub fn dsm_objective_with_noise(s: &dyn ScoreFn, x: &DenseMatrix, noise: &DenseMatrix, noise_variance: f64) -> Result<f64> {
    check_noise(x, noise, noise_variance)?;
    let sd = noise_variance.sqrt();
    let n = x.rows();
    let mut total = 0.0;
    for r in 0..noise.rows() {
        let e = noise.row(r);
        let y: Vec<f64> = x.row(r % n).iter().zip(e).map(|(a, w)| a + sd * w).collect();
        let pred = s.score(&y)?;
        total += e.iter().zip(&pred).map(|(w, p)| (-w / sd - p).powi(2)).sum::<f64>();
    }
    Ok(0.5 * total / noise.rows() as f64)
}

/// [`dsm_objective_with_noise`] with one fresh draw per data row.
pub fn dsm_objective(s: &dyn ScoreFn, x: &DenseMatrix, rng: &mut Rng, noise_variance: f64) -> Result<f64> {
    let noise = draw_dsm_noise(x, 1, rng);
    dsm_objective_with_noise(s, x, &noise, noise_variance)
}

/// Minimiser of the objective over the family `s(y) = a·y`.
pub fn dsm_linear_fit(x: &DenseMatrix, noise: &DenseMatrix, noise_variance: f64) -> Result<f64> {
    check_noise(x, noise, noise_variance)?;
    let sd = noise_variance.sqrt();
    let n = x.rows();
    let (mut ty, mut yy) = (0.0, 0.0);
    for r in 0..noise.rows() {
        for (a, w) in x.row(r % n).iter().zip(noise.row(r)) {
            let y = a + sd * w;
            ty += -w / sd * y;
            yy += y * y;
        }
    }
    if yy == 0.0 {
        return Err(invalid("corrupted data are all zero"));
    }
    Ok(ty / yy)
}

fn dsm_loss_and_gradients(m: &ScoreModel, x: &DenseMatrix, noise: &DenseMatrix) -> Result<(f64, MlpGradients)> {
    let sd = m.noise_variance.sqrt();
    let n = x.rows();
    let count = noise.rows() as f64;
    let mut grads = MlpGradients::zeros_like(&m.net);
    let mut loss = 0.0;
    for r in 0..noise.rows() {
        let e = noise.row(r);
        let y: Vec<f64> = x.row(r % n).iter().zip(e).map(|(a, w)| a + sd * w).collect();
        let (pred, cache) = m.net.forward(&m.input(&y))?;
        let resid: Vec<f64> = pred.iter().zip(e).map(|(p, w)| p + w / sd).collect();
        loss += 0.5 * sq_norm(&resid) / count;
        let g: Vec<f64> = resid.iter().map(|v| v / count).collect();
        m.net.backprop_output(&cache, &g, &mut grads)?;
    }
    Ok((loss, grads))
}

/// Trains a score network by stochastic gradient descent on the denoising
/// objective. Returns the model and the per-step batch loss.
pub fn dsm_train(ds: &DenseMatrix, noise_variance: f64, arch: &ScoreArch, cfg: &ExperimentConfig) -> Result<(ScoreModel, Vec<f64>)> {
    cfg.validate()?;
    if ds.rows() == 0 || ds.cols() == 0 {
        return Err(invalid("training data are empty"));
    }
    let k = ds.cols();
    let (shift, scale) = if arch.standardize_input {
        let n = ds.rows() as f64;
        let mean: Vec<f64> = (0..k).map(|c| ds.column(c).iter().sum::<f64>() / n).collect();
        let sd: Vec<f64> = (0..k)
            .map(|c| {
                let v = ds.column(c).iter().map(|x| (x - mean[c]).powi(2)).sum::<f64>() / n + noise_variance;
                v.sqrt()
            })
            .collect();
        (mean, sd)
    } else {
        (vec![0.0; k], vec![1.0; k])
    };
    let root = Rng::new(cfg.seed);
    let net = MlpParams::init(&mut root.substream("score.init"), k, &arch.hidden, arch.activation, k, OutputHead::GaussianRegression)?;
    let model = ScoreModel::new(net, shift, scale, noise_variance)?;
    dsm_train_from(model, ds, cfg)
}

/// [`dsm_train`] starting from an existing model.
pub fn dsm_train_from(mut model: ScoreModel, ds: &DenseMatrix, cfg: &ExperimentConfig) -> Result<(ScoreModel, Vec<f64>)> {
    cfg.validate()?;
    if ds.rows() == 0 || ds.cols() != model.dim() {
        return Err(invalid("data width does not match the score model"));
    }
    let root = Rng::new(cfg.seed);
    let mut batches = root.substream("score.batches");
    let mut noise_rng = root.substream("score.noise");
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
        let noise = draw_dsm_noise(&batch, cfg.mc_samples, &mut noise_rng);
        let (loss, grads) = dsm_loss_and_gradients(&model, &batch, &noise)?;
        if !loss.is_finite() || !grads.max_abs().is_finite() {
            return Err(Error::Diverged(format!("non-finite score loss at step {step}")));
        }
        model.net.apply_gradient(cfg.learning_rate, &grads);
        trace.push(loss);
    }
    Ok((model, trace))
}
