//! Evidence lower bounds: the exact decomposition on finite-latent models and
//! a Gaussian variational autoencoder trained through the reparameterised
//! estimator. Everything here is in nats.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::divergence::Pmf;
use crate::error::{invalid, Error, Result};
use crate::latent::GmmParams;
use crate::neuralnet::{Activation, MlpGradients, MlpParams, OutputHead};
use crate::numcore::{DenseMatrix, Rng};

pub const VAE_SCHEMA: &str = "genlearn.vae/1";

/// `D(N(μ, diag σ²) ‖ N(0, I)) = ½ Σ (μ² + σ² − 1 − ln σ²)`.
pub fn gaussian_kl_std(mean: &[f64], var: &[f64]) -> Result<f64> {
    if mean.len() != var.len() {
        return Err(invalid("mean and variance lengths differ"));
    }
    if var.iter().any(|v| !(*v > 0.0)) {
        return Err(invalid("variances must be positive"));
    }
    Ok(0.5 * mean.iter().zip(var).map(|(m, v)| m * m + v - 1.0 - v.ln()).sum::<f64>())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElboReport {
    pub elbo: f64,
    pub reconstruction: f64,
    pub kl: f64,
    pub log_likelihood: Option<f64>,
    pub gap: Option<f64>,
}

impl ElboReport {
    fn new(reconstruction: f64, kl: f64) -> Self {
        ElboReport { elbo: reconstruction - kl, reconstruction, kl, log_likelihood: None, gap: None }
    }

    /// `−elbo`, the quantity minimised in training.
    pub fn loss(&self) -> f64 {
        -self.elbo
    }
}

/// ELBO of a mixture with the component index as the latent variable and
/// `g` as the variational distribution, together with the exact `ln f(x)`.
pub fn elbo_tractable(model: &GmmParams, x: &[f64], g: &Pmf) -> Result<ElboReport> {
    if g.len() != model.components() {
        return Err(invalid("variational pmf must cover every component"));
    }
    let pi = model.weights().probs();
    let mut recon = 0.0;
    let mut kl = 0.0;
    for (j, &gj) in g.probs().iter().enumerate() {
        if gj > 0.0 {
            recon += gj * model.component_log_pdf(j, x);
            kl += gj * (gj / pi[j]).ln();
        }
    }
    let mut r = ElboReport::new(recon, kl);
    let ll = model.log_pdf(x)?;
    r.log_likelihood = Some(ll);
    r.gap = Some(ll - r.elbo);
    Ok(r)
}

/// Diagonal Gaussian `N(μ, diag exp(log_var))`.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalPosterior {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl VariationalPosterior {
    pub fn variances(&self) -> Vec<f64> {
        self.log_var.iter().map(|v| v.exp()).collect()
    }

    /// `μ + σ ⊙ ε`.
    pub fn reparameterize(&self, eps: &[f64]) -> Vec<f64> {
        self.mean.iter().zip(&self.log_var).zip(eps).map(|((m, lv), e)| m + (0.5 * lv).exp() * e).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VaeFile", into = "VaeFile")]
pub struct VaeModel {
    encoder: MlpParams,
    decoder: MlpParams,
    latent_dim: usize,
    decoder_variance: f64,
}

#[derive(Serialize, Deserialize)]
struct VaeFile {
    schema: String,
    latent_dim: usize,
    decoder_variance: f64,
    encoder: MlpParams,
    decoder: MlpParams,
}

impl TryFrom<VaeFile> for VaeModel {
    type Error = Error;
    fn try_from(f: VaeFile) -> Result<Self> {
        if f.schema != VAE_SCHEMA {
            return Err(Error::Serialization(format!("unsupported vae schema `{}`", f.schema)));
        }
        let m = VaeModel::new(f.encoder, f.decoder, f.decoder_variance)?;
        if m.latent_dim != f.latent_dim {
            return Err(Error::Serialization("latent width does not match the networks".into()));
        }
        Ok(m)
    }
}

impl From<VaeModel> for VaeFile {
    fn from(m: VaeModel) -> Self {
        VaeFile {
            schema: VAE_SCHEMA.into(),
            latent_dim: m.latent_dim,
            decoder_variance: m.decoder_variance,
            encoder: m.encoder,
            decoder: m.decoder,
        }
    }
}

/// Encoder and decoder shapes for [`vae_train`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeArch {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub decoder_variance: f64,
}

impl VaeArch {
    pub fn new(latent_dim: usize) -> Self {
        VaeArch { latent_dim, hidden: vec![16], activation: Activation::Logistic, decoder_variance: 0.1 }
    }

    pub fn linear(latent_dim: usize) -> Self {
        VaeArch { hidden: Vec::new(), ..Self::new(latent_dim) }
    }
}

pub struct VaeGradients {
    pub encoder: MlpGradients,
    pub decoder: MlpGradients,
}

impl VaeModel {
    pub fn new(encoder: MlpParams, decoder: MlpParams, decoder_variance: f64) -> Result<Self> {
        let k = decoder.input_dim();
        if encoder.output_dim() != 2 * k {
            return Err(invalid(format!("encoder emits {} values, expected 2·{k}", encoder.output_dim())));
        }
        if decoder.output_dim() != encoder.input_dim() {
            return Err(invalid("decoder output width differs from the data dimension"));
        }
        if encoder.head() != OutputHead::GaussianRegression || decoder.head() != OutputHead::GaussianRegression {
            return Err(invalid("both halves need identity output layers"));
        }
        if !(decoder_variance > 0.0) || !decoder_variance.is_finite() {
            return Err(invalid("decoder variance must be positive"));
        }
        Ok(VaeModel { encoder, decoder, latent_dim: k, decoder_variance })
    }

    pub fn init(rng: &mut Rng, data_dim: usize, arch: &VaeArch) -> Result<Self> {
        if arch.latent_dim == 0 || arch.latent_dim >= data_dim {
            return Err(invalid("latent width must satisfy 0 < K < M"));
        }
        let k = arch.latent_dim;
        let enc = MlpParams::init(rng, data_dim, &arch.hidden, arch.activation, 2 * k, OutputHead::GaussianRegression)?;
        let dec = MlpParams::init(rng, k, &arch.hidden, arch.activation, data_dim, OutputHead::GaussianRegression)?;
        Self::new(enc, dec, arch.decoder_variance)
    }

    pub fn encoder(&self) -> &MlpParams {
        &self.encoder
    }

    pub fn decoder(&self) -> &MlpParams {
        &self.decoder
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn data_dim(&self) -> usize {
        self.decoder.output_dim()
    }

    pub fn decoder_variance(&self) -> f64 {
        self.decoder_variance
    }

    pub fn encode(&self, x: &[f64]) -> Result<VariationalPosterior> {
        let out = self.encoder.predict(x)?;
        let (m, lv) = out.split_at(self.latent_dim);
        Ok(VariationalPosterior { mean: m.to_vec(), log_var: lv.to_vec() })
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.decoder.predict(z)
    }

    /// Fresh standard-normal noise, `mc_samples` draws per row of `batch`.
    pub fn draw_noise(&self, batch: &DenseMatrix, rng: &mut Rng, mc_samples: usize) -> Vec<Vec<Vec<f64>>> {
        (0..batch.rows()).map(|_| (0..mc_samples).map(|_| rng.normal_vec(self.latent_dim)).collect()).collect()
    }

    fn gaussian_loglik(&self, x: &[f64], mean: &[f64]) -> f64 {
        let s2 = self.decoder_variance;
        let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b).powi(2)).sum();
        -sq / (2.0 * s2) - 0.5 * x.len() as f64 * (2.0 * PI * s2).ln()
    }

    /// Per-datapoint mean ELBO on frozen noise `noise[i][s]`.
    pub fn elbo_with_noise(&self, batch: &DenseMatrix, noise: &[Vec<Vec<f64>>]) -> Result<ElboReport> {
        Ok(self.loss_and_gradients_inner(batch, noise, false)?.0)
    }

    /// Per-datapoint mean ELBO and the gradients of `−ELBO` on frozen noise.
    pub fn loss_and_gradients(&self, batch: &DenseMatrix, noise: &[Vec<Vec<f64>>]) -> Result<(ElboReport, VaeGradients)> {
        self.loss_and_gradients_inner(batch, noise, true)
    }

    fn loss_and_gradients_inner(
        &self,
        batch: &DenseMatrix,
        noise: &[Vec<Vec<f64>>],
        want_grad: bool,
    ) -> Result<(ElboReport, VaeGradients)> {
        if batch.cols() != self.data_dim() || noise.len() != batch.rows() || batch.rows() == 0 {
            return Err(invalid("batch or noise shape does not match the model"));
        }
        let n = batch.rows() as f64;
        let k = self.latent_dim;
        let mut grads = VaeGradients {
            encoder: MlpGradients::zeros_like(&self.encoder),
            decoder: MlpGradients::zeros_like(&self.decoder),
        };
        let (mut recon, mut kl) = (0.0, 0.0);
        for (i, eps_i) in noise.iter().enumerate() {
            if eps_i.is_empty() {
                return Err(invalid("mc_samples must be at least 1"));
            }
            let x = batch.row(i);
            let (enc_out, enc_cache) = self.encoder.forward(x)?;
            let post = VariationalPosterior { mean: enc_out[..k].to_vec(), log_var: enc_out[k..].to_vec() };
            let var = post.variances();
            if var.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Diverged("encoder variance left the representable range".into()));
            }
            kl += gaussian_kl_std(&post.mean, &var)?;
            let s = eps_i.len() as f64;
            let mut g_enc = vec![0.0; 2 * k];
            for eps in eps_i {
                let z = post.reparameterize(eps);
                let (d, dec_cache) = self.decoder.forward(&z)?;
                recon += self.gaussian_loglik(x, &d) / s;
                if want_grad {
                    let g_out: Vec<f64> = d.iter().zip(x).map(|(a, b)| (a - b) / (self.decoder_variance * s * n)).collect();
                    let g_z = self.decoder.backprop_output(&dec_cache, &g_out, &mut grads.decoder)?;
                    for c in 0..k {
                        g_enc[c] += g_z[c];
                        g_enc[k + c] += g_z[c] * eps[c] * 0.5 * (0.5 * post.log_var[c]).exp();
                    }
                }
            }
            if want_grad {
                for c in 0..k {
                    g_enc[c] += post.mean[c] / n;
                    g_enc[k + c] += 0.5 * (var[c] - 1.0) / n;
                }
                self.encoder.backprop_output(&enc_cache, &g_enc, &mut grads.encoder)?;
            }
        }
        let report = ElboReport::new(recon / n, kl / n);
        if !report.elbo.is_finite() {
            return Err(Error::Diverged("non-finite ELBO".into()));
        }
        Ok((report, grads))
    }

    pub fn apply_gradients(&mut self, lr: f64, g: &VaeGradients) {
        self.encoder.apply_gradient(lr, &g.encoder);
        self.decoder.apply_gradient(lr, &g.decoder);
    }

    /// `z ~ N(0, I)`, `x = decoder(z) + σ ε`.
    pub fn sample(&self, rng: &mut Rng, n: usize) -> Result<DenseMatrix> {
        let sd = self.decoder_variance.sqrt();
        let mut out = DenseMatrix::zeros(n, self.data_dim());
        for r in 0..n {
            let z = rng.normal_vec(self.latent_dim);
            let d = self.decode(&z)?;
            for (v, m) in out.row_mut(r).iter_mut().zip(d) {
                *v = m + sd * rng.normal();
            }
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

/// Per-datapoint mean ELBO of `batch` with `mc_samples` reparameterised
/// draws per point taken from `rng`.
pub fn vae_loss(model: &VaeModel, batch: &DenseMatrix, rng: &mut Rng, mc_samples: usize) -> Result<ElboReport> {
    if mc_samples == 0 {
        return Err(invalid("mc_samples must be at least 1"));
    }
    let noise = model.draw_noise(batch, rng, mc_samples);
    model.elbo_with_noise(batch, &noise)
}

/// Mini-batch SGD on `−ELBO` for `cfg.max_steps` epochs. After each epoch
/// the trace records the dataset ELBO under a fixed evaluation noise draw.
pub fn vae_train(ds: &DenseMatrix, arch: &VaeArch, cfg: &ExperimentConfig) -> Result<(VaeModel, Vec<f64>)> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let model = VaeModel::init(&mut root.substream("vae.init"), ds.cols(), arch)?;
    vae_train_from(model, ds, cfg)
}

/// [`vae_train`] starting from an existing model.
pub fn vae_train_from(mut model: VaeModel, ds: &DenseMatrix, cfg: &ExperimentConfig) -> Result<(VaeModel, Vec<f64>)> {
    cfg.validate()?;
    if cfg.batch_size > ds.rows() {
        return Err(invalid("batch size exceeds dataset size"));
    }
    let root = Rng::new(cfg.seed);
    let mut batches = root.substream("vae.batches");
    let mut noise_rng = root.substream("vae.noise");
    let mut order: Vec<usize> = (0..ds.rows()).collect();
    let mut trace = Vec::with_capacity(cfg.max_steps);
    let mut step = 0usize;
    for _ in 0..cfg.max_steps {
        batches.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = ds.select_rows(chunk);
            let noise = model.draw_noise(&batch, &mut noise_rng, cfg.mc_samples);
            let (_, g) = model
                .loss_and_gradients(&batch, &noise)
                .map_err(|e| match e {
                    Error::Diverged(m) => Error::Diverged(format!("{m} at step {step}")),
                    other => other,
                })?;
            model.apply_gradients(cfg.learning_rate, &g);
            step += 1;
        }
        let mut eval = root.substream("vae.eval");
        let r = vae_loss(&model, ds, &mut eval, cfg.mc_samples)
            .map_err(|e| Error::Diverged(format!("{e} after step {step}")))?;
        trace.push(r.elbo);
    }
    Ok((model, trace))
}
