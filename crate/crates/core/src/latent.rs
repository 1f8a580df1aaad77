//! Latent-variable models fitted by maximum likelihood: probabilistic PCA
//! (closed form) and Gaussian mixtures (EM). Log-likelihoods are in nats.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::divergence::Pmf;
use crate::error::{invalid, Error, Result};
use crate::numcore::{cholesky, eigh_sym, log_sum_exp, Cholesky, DenseMatrix, Rng};

pub const PPCA_SCHEMA: &str = "genlearn.ppca/1";
pub const GMM_SCHEMA: &str = "genlearn.gmm/1";

/// Column means of `data`.
pub fn sample_mean(data: &DenseMatrix) -> Vec<f64> {
    let n = data.rows() as f64;
    let mut m = vec![0.0; data.cols()];
    for r in 0..data.rows() {
        for (a, b) in m.iter_mut().zip(data.row(r)) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|v| *v /= n);
    m
}

/// `(1/n) Σ (x_i − μ)(x_i − μ)ᵀ`.
pub fn sample_covariance(data: &DenseMatrix, mean: &[f64]) -> DenseMatrix {
    let m = data.cols();
    let mut s = DenseMatrix::zeros(m, m);
    for r in 0..data.rows() {
        let d: Vec<f64> = data.row(r).iter().zip(mean).map(|(a, b)| a - b).collect();
        s.add_outer(1.0, &d, &d);
    }
    s.scale(1.0 / data.rows() as f64)
}

/// `ln N(x; mean, Σ)` given the Cholesky factor of `Σ`.
pub fn gaussian_log_pdf(x: &[f64], mean: &[f64], chol: &Cholesky) -> f64 {
    let d: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    -0.5 * (x.len() as f64 * (2.0 * PI).ln() + chol.log_det() + chol.quad_form(&d))
}

/// `x ↦ μ + W z + σ ε` with `z ~ N(0, I_K)`, `ε ~ N(0, I_M)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PpcaFile", into = "PpcaFile")]
pub struct PpcaParams {
    pub w: DenseMatrix,
    pub mean: Vec<f64>,
    pub noise_variance: f64,
}

#[derive(Serialize, Deserialize)]
struct PpcaFile {
    schema: String,
    w: DenseMatrix,
    mean: Vec<f64>,
    noise_variance: f64,
}

impl TryFrom<PpcaFile> for PpcaParams {
    type Error = Error;
    fn try_from(f: PpcaFile) -> Result<Self> {
        if f.schema != PPCA_SCHEMA {
            return Err(Error::Serialization(format!("unsupported ppca schema `{}`", f.schema)));
        }
        if f.w.rows() != f.mean.len() || !(f.noise_variance >= 0.0) {
            return Err(invalid("inconsistent ppca parameters"));
        }
        Ok(PpcaParams { w: f.w, mean: f.mean, noise_variance: f.noise_variance })
    }
}

impl From<PpcaParams> for PpcaFile {
    fn from(p: PpcaParams) -> Self {
        PpcaFile { schema: PPCA_SCHEMA.into(), w: p.w, mean: p.mean, noise_variance: p.noise_variance }
    }
}

impl PpcaParams {
    pub fn data_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.w.cols()
    }

    /// Marginal covariance `C = W Wᵀ + σ² I`.
    pub fn marginal_covariance(&self) -> DenseMatrix {
        let mut c = self.w.matmul(&self.w.transpose());
        c.add_diag(self.noise_variance);
        c
    }

    pub fn sample(&self, rng: &mut Rng, n: usize) -> DenseMatrix {
        let (m, k) = (self.data_dim(), self.latent_dim());
        let sd = self.noise_variance.sqrt();
        let mut out = DenseMatrix::zeros(n, m);
        for r in 0..n {
            let z = rng.normal_vec(k);
            let wz = self.w.mat_vec(&z);
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = self.mean[j] + wz[j] + sd * rng.normal();
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Closed-form maximum-likelihood PPCA: `σ²` is the mean of the `M − K`
/// smallest eigenvalues of the sample covariance and `W = U_K (Λ_K − σ² I)^{1/2}`.
pub fn ppca_fit(ds: &DenseMatrix, k: usize) -> Result<PpcaParams> {
    let (n, m) = ds.shape();
    if k == 0 || m < k + 1 || n <= m {
        return Err(invalid(format!("ppca needs n > M >= K+1 and K >= 1 (n={n}, M={m}, K={k})")));
    }
    let mean = sample_mean(ds);
    let s = sample_covariance(ds, &mean);
    let eig = eigh_sym(&s)?;
    let sigma2 = (eig.values[k..].iter().sum::<f64>() / (m - k) as f64).max(0.0);
    if eig.values[k - 1] < sigma2 {
        return Err(Error::DegenerateSpectrum { eigenvalue: eig.values[k - 1], noise: sigma2 });
    }
    let w = DenseMatrix::from_fn(m, k, |r, c| eig.vectors[(r, c)] * (eig.values[c] - sigma2).sqrt());
    Ok(PpcaParams { w, mean, noise_variance: sigma2 })
}

/// Posterior `N(A⁻¹Wᵀ(x − μ), σ² A⁻¹)` with `A = WᵀW + σ² I`.
pub fn ppca_posterior(p: &PpcaParams, x: &[f64]) -> Result<(Vec<f64>, DenseMatrix)> {
    if x.len() != p.data_dim() {
        return Err(invalid("input dimension does not match the model"));
    }
    if !(p.noise_variance > 0.0) {
        return Err(invalid("posterior needs a positive noise variance"));
    }
    let mut a = p.w.gram();
    a.add_diag(p.noise_variance);
    let ch = cholesky(&a)?;
    let d: Vec<f64> = x.iter().zip(&p.mean).map(|(a, b)| a - b).collect();
    let mean = ch.solve(&p.w.tr_mat_vec(&d));
    Ok((mean, ch.inverse().scale(p.noise_variance)))
}

/// Log-likelihood `Σ ln N(x_i; μ, C)` in nats.
pub fn ppca_loglik(p: &PpcaParams, data: &DenseMatrix) -> Result<f64> {
    if data.cols() != p.data_dim() {
        return Err(invalid("data dimension does not match the model"));
    }
    let ch = cholesky(&p.marginal_covariance()).map_err(|_| Error::InvalidModel("marginal covariance is singular".into()))?;
    Ok((0..data.rows()).map(|r| gaussian_log_pdf(data.row(r), &p.mean, &ch)).sum())
}

/// Mixture `Σ_j π_j N(μ_j, Σ_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GmmFile", into = "GmmFile")]
pub struct GmmParams {
    weights: Pmf,
    means: Vec<Vec<f64>>,
    covariances: Vec<DenseMatrix>,
    #[serde(skip)]
    factors: Vec<Cholesky>,
}

#[derive(Serialize, Deserialize)]
struct GmmFile {
    schema: String,
    components: usize,
    weights: Pmf,
    means: Vec<Vec<f64>>,
    covariances: Vec<DenseMatrix>,
}

impl TryFrom<GmmFile> for GmmParams {
    type Error = Error;
    fn try_from(f: GmmFile) -> Result<Self> {
        if f.schema != GMM_SCHEMA {
            return Err(Error::Serialization(format!("unsupported gmm schema `{}`", f.schema)));
        }
        if f.components != f.weights.len() {
            return Err(Error::Serialization("component count does not match the weights".into()));
        }
        GmmParams::new(f.weights, f.means, f.covariances)
    }
}

impl From<GmmParams> for GmmFile {
    fn from(g: GmmParams) -> Self {
        GmmFile { schema: GMM_SCHEMA.into(), components: g.weights.len(), weights: g.weights, means: g.means, covariances: g.covariances }
    }
}

impl GmmParams {
    pub fn new(weights: Pmf, means: Vec<Vec<f64>>, covariances: Vec<DenseMatrix>) -> Result<Self> {
        let d = weights.len();
        if means.len() != d || covariances.len() != d {
            return Err(Error::InvalidModel("component counts differ".into()));
        }
        let m = means[0].len();
        let mut factors = Vec::with_capacity(d);
        for (j, (mu, cov)) in means.iter().zip(&covariances).enumerate() {
            if mu.len() != m || cov.shape() != (m, m) {
                return Err(Error::InvalidModel(format!("component {j} has inconsistent dimensions")));
            }
            if !cov.is_symmetric(1e-10 * cov.max_abs().max(1.0)) {
                return Err(Error::InvalidModel(format!("covariance {j} is not symmetric")));
            }
            factors.push(cholesky(cov).map_err(|_| Error::InvalidModel(format!("covariance {j} is not positive definite")))?);
        }
        Ok(GmmParams { weights, means, covariances, factors })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &Pmf {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DenseMatrix] {
        &self.covariances
    }

    /// `ln π_j + ln N(x; μ_j, Σ_j)` for every component.
    pub fn joint_log(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(invalid("input dimension does not match the mixture"));
        }
        Ok((0..self.components())
            .map(|j| self.weights.probs()[j].ln() + gaussian_log_pdf(x, &self.means[j], &self.factors[j]))
            .collect())
    }

    /// `ln N(x; μ_j, Σ_j)`.
    pub fn component_log_pdf(&self, j: usize, x: &[f64]) -> f64 {
        gaussian_log_pdf(x, &self.means[j], &self.factors[j])
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        Ok(log_sum_exp(&self.joint_log(x)?))
    }

    pub fn sample(&self, rng: &mut Rng, n: usize) -> DenseMatrix {
        let m = self.dim();
        let mut out = DenseMatrix::zeros(n, m);
        for r in 0..n {
            let j = rng.categorical(self.weights.probs());
            let e = rng.normal_vec(m);
            let l = self.factors[j].factor();
            for (i, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = self.means[j][i] + (0..=i).map(|k| l[(i, k)] * e[k]).sum::<f64>();
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn gmm_pdf(g: &GmmParams, x: &[f64]) -> Result<f64> {
    Ok(g.log_pdf(x)?.exp())
}

/// Component posterior `p(j | x)`, computed in log space.
pub fn gmm_posterior(g: &GmmParams, x: &[f64]) -> Result<Pmf> {
    let lj = g.joint_log(x)?;
    let m = lj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = lj.iter().map(|v| (v - m).exp()).collect();
    Pmf::from_weights(&e)
}

/// `Σ_i ln f(x_i)` in nats.
pub fn gmm_loglik(g: &GmmParams, data: &DenseMatrix) -> Result<f64> {
    let mut total = 0.0;
    for r in 0..data.rows() {
        total += g.log_pdf(data.row(r))?;
    }
    Ok(total)
}

/// Parameters, the responsibilities used to produce them, and the
/// log-likelihood after every step (the first entry is the initial value).
#[derive(Clone, Debug, PartialEq)]
pub struct EmState {
    pub params: GmmParams,
    pub responsibilities: DenseMatrix,
    pub trace: Vec<f64>,
    pub reseeds: usize,
}

impl EmState {
    pub fn new(params: GmmParams, ds: &DenseMatrix) -> Result<Self> {
        let responsibilities = e_step(&params, ds)?;
        let trace = vec![gmm_loglik(&params, ds)?];
        Ok(EmState { params, responsibilities, trace, reseeds: 0 })
    }

    pub fn loglik(&self) -> f64 {
        *self.trace.last().expect("trace starts non-empty")
    }
}

fn e_step(g: &GmmParams, ds: &DenseMatrix) -> Result<DenseMatrix> {
    let mut r = DenseMatrix::zeros(ds.rows(), g.components());
    for i in 0..ds.rows() {
        let post = gmm_posterior(g, ds.row(i))?;
        r.row_mut(i).copy_from_slice(post.probs());
    }
    Ok(r)
}

/// `1e-8 · trace(S)/M`, the ridge added to every covariance.
pub fn covariance_floor(ds: &DenseMatrix) -> f64 {
    let s = sample_covariance(ds, &sample_mean(ds));
    1e-8 * s.trace() / ds.cols() as f64
}

fn m_step(resp: &DenseMatrix, ds: &DenseMatrix, floor: f64) -> Result<GmmParams> {
    let (n, m) = ds.shape();
    let d = resp.cols();
    let nj: Vec<f64> = (0..d).map(|j| (0..n).map(|i| resp[(i, j)]).sum()).collect();
    let mut means = Vec::with_capacity(d);
    let mut covs = Vec::with_capacity(d);
    for j in 0..d {
        if !(nj[j] >= 1e-8) {
            return Err(Error::ComponentCollapse { component: j });
        }
        let mut mu = vec![0.0; m];
        for i in 0..n {
            for (a, b) in mu.iter_mut().zip(ds.row(i)) {
                *a += resp[(i, j)] * b;
            }
        }
        mu.iter_mut().for_each(|v| *v /= nj[j]);
        let mut cov = DenseMatrix::zeros(m, m);
        for i in 0..n {
            let dv: Vec<f64> = ds.row(i).iter().zip(&mu).map(|(a, b)| a - b).collect();
            cov.add_outer(resp[(i, j)], &dv, &dv);
        }
        let mut cov = cov.scale(1.0 / nj[j]).symmetrized();
        cov.add_diag(floor);
        if cholesky(&cov).is_err() {
            return Err(Error::ComponentCollapse { component: j });
        }
        means.push(mu);
        covs.push(cov);
    }
    let weights = Pmf::from_weights(&nj)?;
    GmmParams::new(weights, means, covs)
}

/// One E step followed by one M step.
pub fn em_step(state: &EmState, ds: &DenseMatrix) -> Result<EmState> {
    em_step_with_floor(state, ds, covariance_floor(ds))
}

fn em_step_with_floor(state: &EmState, ds: &DenseMatrix, floor: f64) -> Result<EmState> {
    let resp = e_step(&state.params, ds)?;
    let params = m_step(&resp, ds, floor)?;
    let mut trace = state.trace.clone();
    trace.push(gmm_loglik(&params, ds)?);
    Ok(EmState { params, responsibilities: resp, trace, reseeds: state.reseeds })
}

/// k-means++ seeding of the means, the floored sample covariance for every
/// component and uniform weights.
pub fn em_init(ds: &DenseMatrix, d: usize, rng: &mut Rng) -> Result<GmmParams> {
    let (n, m) = ds.shape();
    if d == 0 || n < d * (m + 1) {
        return Err(invalid(format!("EM with {d} components in {m} dimensions needs at least {} points", d * (m + 1))));
    }
    let mut centers: Vec<Vec<f64>> = vec![ds.row(rng.below(n)).to_vec()];
    while centers.len() < d {
        let dist: Vec<f64> = (0..n)
            .map(|i| {
                centers
                    .iter()
                    .map(|c| c.iter().zip(ds.row(i)).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let idx = if dist.iter().sum::<f64>() > 0.0 { rng.categorical(&dist) } else { rng.below(n) };
        centers.push(ds.row(idx).to_vec());
    }
    let mean = sample_mean(ds);
    let mut cov = sample_covariance(ds, &mean);
    cov.add_diag(covariance_floor(ds));
    GmmParams::new(Pmf::uniform(d)?, centers, vec![cov; d])
}

/// EM from a seeded initialisation until `|Δℓ| < 1e-8` or `cfg.max_steps`.
/// A collapsing component is re-seeded once from a random data point; a
/// second collapse is returned as an error.
pub fn em_fit(ds: &DenseMatrix, d: usize, cfg: &ExperimentConfig) -> Result<EmState> {
    let mut rng = Rng::new(cfg.seed).substream("em.init");
    let floor = covariance_floor(ds);
    let mut state = EmState::new(em_init(ds, d, &mut rng)?, ds)?;
    let mut steps = 0;
    while steps < cfg.max_steps {
        match em_step_with_floor(&state, ds, floor) {
            Ok(next) => {
                steps += 1;
                let delta = next.loglik() - state.loglik();
                state = next;
                if delta.abs() < 1e-8 {
                    break;
                }
            }
            Err(Error::ComponentCollapse { component }) if state.reseeds == 0 => {
                state = reseed(&state, ds, component, &mut rng)?;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(state)
}

fn reseed(state: &EmState, ds: &DenseMatrix, j: usize, rng: &mut Rng) -> Result<EmState> {
    let g = &state.params;
    let mut means = g.means.clone();
    let mut covs = g.covariances.clone();
    let mut w = g.weights.probs().to_vec();
    means[j] = ds.row(rng.below(ds.rows())).to_vec();
    let mean = sample_mean(ds);
    covs[j] = sample_covariance(ds, &mean);
    covs[j].add_diag(covariance_floor(ds));
    w[j] = 1.0 / g.components() as f64;
    let params = GmmParams::new(Pmf::from_weights(&w)?, means, covs)?;
    let mut next = EmState::new(params, ds)?;
    next.trace = state.trace.clone();
    next.trace.push(gmm_loglik(&next.params, ds)?);
    next.reseeds = state.reseeds + 1;
    Ok(next)
}
