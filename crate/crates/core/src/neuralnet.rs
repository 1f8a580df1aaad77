//! Fully connected feed-forward networks with exact backpropagation.
//!
//! Layer `l` maps `z^(l-1)` to `z^(l) = φ(W^(l) [1; z^(l-1)])`; column 0 of
//! every weight matrix holds the biases. The activation of the last layer is
//! fixed by the output head. Losses are negative conditional
//! log-likelihoods in nats, summed over the batch.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::numcore::{log_sum_exp, sigmoid, DenseMatrix, Rng};
use crate::regression::{ln_sigmoid, softmax, LabeledDataset, Targets};

pub const MLP_SCHEMA: &str = "genlearn.mlp/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Logistic,
    Relu,
    /// Forward evaluation only.
    Heaviside,
    /// Final layer of a categorical head only.
    Softmax,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Logistic => "logistic",
            Activation::Relu => "relu",
            Activation::Heaviside => "heaviside",
            Activation::Softmax => "softmax",
        }
    }

    pub fn apply(&self, a: &[f64]) -> Vec<f64> {
        match self {
            Activation::Identity => a.to_vec(),
            Activation::Logistic => a.iter().map(|v| sigmoid(*v)).collect(),
            Activation::Relu => a.iter().map(|v| v.max(0.0)).collect(),
            Activation::Heaviside => a.iter().map(|v| if *v >= 0.0 { 1.0 } else { 0.0 }).collect(),
            Activation::Softmax => softmax(a),
        }
    }

    /// Element-wise derivative given pre-activation `a` and output `z`.
    fn derivative(&self, a: f64, z: f64) -> Result<f64> {
        match self {
            Activation::Identity => Ok(1.0),
            Activation::Logistic => Ok(z * (1.0 - z)),
            Activation::Relu => Ok(if a > 0.0 { 1.0 } else { 0.0 }),
            Activation::Heaviside | Activation::Softmax => {
                Err(Error::NonDifferentiableActivation(self.name().into()))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    /// `N(y; r(x), σ²)` with fixed `σ²`; identity output.
    GaussianRegression,
    /// `Bern(y; p(x))`; logistic output.
    Bernoulli,
    /// `Cat(y; p(x))`; softmax output.
    Categorical,
}

impl OutputHead {
    pub fn activation(&self) -> Activation {
        match self {
            OutputHead::GaussianRegression => Activation::Identity,
            OutputHead::Bernoulli => Activation::Logistic,
            OutputHead::Categorical => Activation::Softmax,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: DenseMatrix,
    pub activation: Activation,
}

/// Network weights, output head and the fixed Gaussian-head variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpFile", into = "MlpFile")]
pub struct MlpParams {
    layers: Vec<Layer>,
    head: OutputHead,
    noise_variance: f64,
}

#[derive(Serialize, Deserialize)]
struct MlpFile {
    schema: String,
    head: OutputHead,
    noise_variance: f64,
    layers: Vec<Layer>,
}

impl TryFrom<MlpFile> for MlpParams {
    type Error = Error;
    fn try_from(f: MlpFile) -> Result<Self> {
        if f.schema != MLP_SCHEMA {
            return Err(Error::Serialization(format!("unsupported network schema `{}`", f.schema)));
        }
        MlpParams::new(f.layers, f.head)?.with_noise_variance(f.noise_variance)
    }
}

impl From<MlpParams> for MlpFile {
    fn from(p: MlpParams) -> Self {
        MlpFile { schema: MLP_SCHEMA.into(), head: p.head, noise_variance: p.noise_variance, layers: p.layers }
    }
}

/// Per-layer quantities recorded by [`MlpParams::forward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer (`z^(l-1)`, without the leading 1).
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activations `a^(l)`.
    pub pre: Vec<Vec<f64>>,
    /// Post-activations `z^(l)`.
    pub post: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn logits(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Gradient with the same layout as the weights of [`MlpParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGradients {
    pub layers: Vec<DenseMatrix>,
}

impl MlpGradients {
    pub fn zeros_like(net: &MlpParams) -> Self {
        MlpGradients { layers: net.layers.iter().map(|l| DenseMatrix::zeros(l.weights.rows(), l.weights.cols())).collect() }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|m| m.data().iter().cloned()).collect()
    }

    pub fn scale(&mut self, s: f64) {
        for m in &mut self.layers {
            for v in m.data_mut() {
                *v *= s;
            }
        }
    }

    pub fn accumulate(&mut self, s: f64, other: &MlpGradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.axpy(s, b);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers.iter().fold(0.0, |m, l| m.max(l.max_abs()))
    }
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>, head: OutputHead) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("a network needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].weights.cols() != pair[0].weights.rows() + 1 {
                return Err(invalid(format!(
                    "layer {} has {} columns but layer {} emits {} values",
                    i + 1,
                    pair[1].weights.cols(),
                    i,
                    pair[0].weights.rows()
                )));
            }
        }
        let last = layers.len() - 1;
        for (i, l) in layers.iter().enumerate() {
            if l.weights.cols() == 0 || l.weights.rows() == 0 {
                return Err(invalid(format!("layer {i} is empty")));
            }
            if i < last && l.activation == Activation::Softmax {
                return Err(invalid("softmax is only allowed as the categorical head"));
            }
        }
        if layers[last].activation != head.activation() {
            return Err(invalid(format!(
                "final activation `{}` does not match the {:?} head",
                layers[last].activation.name(),
                head
            )));
        }
        if head == OutputHead::Bernoulli && layers[last].weights.rows() != 1 {
            return Err(invalid("a bernoulli head has exactly one output"));
        }
        Ok(MlpParams { layers, head, noise_variance: 1.0 })
    }

    /// Layers of widths `hidden` followed by the head layer, with weights
    /// drawn from `uniform(±1/√fan_in)` where `fan_in` counts the bias.
    pub fn init(
        rng: &mut Rng,
        input_dim: usize,
        hidden: &[usize],
        hidden_activation: Activation,
        output_dim: usize,
        head: OutputHead,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input_dim;
        let widths: Vec<(usize, Activation)> = hidden
            .iter()
            .map(|w| (*w, hidden_activation))
            .chain(std::iter::once((output_dim, head.activation())))
            .collect();
        for (w, act) in widths {
            let s = 1.0 / ((prev + 1) as f64).sqrt();
            let weights = DenseMatrix::from_fn(w, prev + 1, |_, _| rng.uniform_range(-s, s));
            layers.push(Layer { weights, activation: act });
            prev = w;
        }
        Self::new(layers, head)
    }

    pub fn with_noise_variance(mut self, v: f64) -> Result<Self> {
        if !(v > 0.0) || !v.is_finite() {
            return Err(invalid("noise variance must be positive"));
        }
        self.noise_variance = v;
        Ok(self)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn head(&self) -> OutputHead {
        self.head
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols() - 1
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.rows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.data().len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.data().iter().cloned()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length mismatch");
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weights.data().len();
            l.weights.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    /// `self -= lr * g`.
    pub fn apply_gradient(&mut self, lr: f64, g: &MlpGradients) {
        for (l, gl) in self.layers.iter_mut().zip(&g.layers) {
            l.weights.axpy(-lr, gl);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if x.len() != self.input_dim() {
            return Err(invalid(format!("network expects {} inputs, got {}", self.input_dim(), x.len())));
        }
        let mut cache = ForwardCache { inputs: Vec::new(), pre: Vec::new(), post: Vec::new() };
        let mut z = x.to_vec();
        for l in &self.layers {
            let w = &l.weights;
            let a: Vec<f64> = (0..w.rows())
                .map(|r| {
                    let row = w.row(r);
                    row[0] + row[1..].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            let out = l.activation.apply(&a);
            cache.inputs.push(std::mem::replace(&mut z, out.clone()));
            cache.pre.push(a);
            cache.post.push(out);
        }
        Ok((z, cache))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.0)
    }

    /// Backpropagates `delta = ∂L/∂a^(L)` (gradient at the final
    /// pre-activation), accumulating weight gradients into `grads`.
    /// Returns `∂L/∂x`.
    pub fn backprop_preactivation(&self, cache: &ForwardCache, delta: &[f64], grads: &mut MlpGradients) -> Result<Vec<f64>> {
        let mut delta = delta.to_vec();
        for l in (0..self.layers.len()).rev() {
            let w = &self.layers[l].weights;
            let input = &cache.inputs[l];
            let g = &mut grads.layers[l];
            for (r, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = g.row_mut(r);
                row[0] += d;
                for (gv, zv) in row[1..].iter_mut().zip(input) {
                    *gv += d * zv;
                }
            }
            let mut back = vec![0.0; input.len()];
            for (r, d) in delta.iter().enumerate() {
                for (b, wv) in back.iter_mut().zip(&w.row(r)[1..]) {
                    *b += d * wv;
                }
            }
            if l > 0 {
                let act = self.layers[l - 1].activation;
                for (i, b) in back.iter_mut().enumerate() {
                    *b *= act.derivative(cache.pre[l - 1][i], cache.post[l - 1][i])?;
                }
            }
            delta = back;
        }
        Ok(delta)
    }

    /// Backpropagates `∂L/∂output` through the head activation as well.
    pub fn backprop_output(&self, cache: &ForwardCache, grad_out: &[f64], grads: &mut MlpGradients) -> Result<Vec<f64>> {
        let out = cache.output();
        let delta: Vec<f64> = match self.head.activation() {
            Activation::Identity => grad_out.to_vec(),
            Activation::Logistic => grad_out.iter().zip(out).map(|(g, z)| g * z * (1.0 - z)).collect(),
            Activation::Softmax => {
                let s: f64 = grad_out.iter().zip(out).map(|(g, p)| g * p).sum();
                grad_out.iter().zip(out).map(|(g, p)| p * (g - s)).collect()
            }
            other => return Err(Error::NonDifferentiableActivation(other.name().into())),
        };
        self.backprop_preactivation(cache, &delta, grads)
    }

    fn check_heads(&self, batch: &LabeledDataset) -> Result<()> {
        if batch.dim() != self.input_dim() {
            return Err(invalid(format!("batch has {} features, network expects {}", batch.dim(), self.input_dim())));
        }
        match (self.head, batch.targets()) {
            (OutputHead::GaussianRegression, Targets::Real(_)) if self.output_dim() == 1 => Ok(()),
            (OutputHead::Bernoulli, Targets::Classes { num_classes: 2, .. }) => Ok(()),
            (OutputHead::Categorical, Targets::Classes { num_classes, .. }) if *num_classes == self.output_dim() => Ok(()),
            _ => Err(invalid(format!("{:?} head does not match the batch targets", self.head))),
        }
    }

    /// Loss of one sample and its gradient at the final pre-activation.
    fn sample_loss(&self, logits: &[f64], targets: &Targets, i: usize) -> (f64, Vec<f64>) {
        match (self.head, targets) {
            (OutputHead::GaussianRegression, Targets::Real(y)) => {
                let s2 = self.noise_variance;
                let r = logits[0] - y[i];
                (r * r / (2.0 * s2) + 0.5 * (2.0 * std::f64::consts::PI * s2).ln(), vec![r / s2])
            }
            (OutputHead::Bernoulli, Targets::Classes { labels, .. }) => {
                let a = logits[0];
                let y = labels[i] as f64;
                let l = -(y * ln_sigmoid(a) + (1.0 - y) * ln_sigmoid(-a));
                (l, vec![sigmoid(a) - y])
            }
            (OutputHead::Categorical, Targets::Classes { labels, .. }) => {
                let y = labels[i];
                let mut g = softmax(logits);
                g[y] -= 1.0;
                (log_sum_exp(logits) - logits[y], g)
            }
            _ => unreachable!("checked by check_heads"),
        }
    }

    /// Summed negative log-likelihood in nats.
    pub fn loss(&self, batch: &LabeledDataset) -> Result<f64> {
        self.check_heads(batch)?;
        let mut total = 0.0;
        for i in 0..batch.len() {
            let (_, cache) = self.forward(batch.input(i))?;
            total += self.sample_loss(cache.logits(), batch.targets(), i).0;
        }
        Ok(total)
    }

    /// Loss and exact gradient.
    pub fn loss_and_gradient(&self, batch: &LabeledDataset) -> Result<(f64, MlpGradients)> {
        self.check_heads(batch)?;
        if let Some(l) = self.layers.iter().find(|l| l.activation == Activation::Heaviside) {
            return Err(Error::NonDifferentiableActivation(l.activation.name().into()));
        }
        let mut grads = MlpGradients::zeros_like(self);
        let mut total = 0.0;
        for i in 0..batch.len() {
            let (_, cache) = self.forward(batch.input(i))?;
            let (l, delta) = self.sample_loss(cache.logits(), batch.targets(), i);
            total += l;
            self.backprop_preactivation(&cache, &delta, &mut grads)?;
        }
        Ok((total, grads))
    }

    pub fn backward(&self, batch: &LabeledDataset) -> Result<MlpGradients> {
        Ok(self.loss_and_gradient(batch)?.1)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn forward(net: &MlpParams, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    net.forward(x)
}

pub fn loss(net: &MlpParams, batch: &LabeledDataset) -> Result<f64> {
    net.loss(batch)
}

pub fn backward(net: &MlpParams, batch: &LabeledDataset) -> Result<MlpGradients> {
    net.backward(batch)
}

/// Mini-batch SGD for `cfg.max_steps` epochs over a seeded shuffle. Each
/// update uses the batch-mean gradient. The trace holds the mean per-sample
/// loss over the whole dataset after every epoch.
pub fn train(net: &MlpParams, ds: &LabeledDataset, cfg: &ExperimentConfig) -> Result<(MlpParams, Vec<f64>)> {
    cfg.validate()?;
    if cfg.batch_size > ds.len() {
        return Err(invalid("batch size exceeds dataset size"));
    }
    let mut net = net.clone();
    let mut rng = Rng::new(cfg.seed).substream("mlp.batches");
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.max_steps);
    let mut step = 0;
    for _epoch in 0..cfg.max_steps {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = ds.subset(chunk);
            let (l, g) = net.loss_and_gradient(&batch)?;
            if !l.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss at step {step}")));
            }
            net.apply_gradient(cfg.learning_rate / chunk.len() as f64, &g);
            step += 1;
        }
        let mean = net.loss(ds)? / n as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss at step {step}")));
        }
        trace.push(mean);
    }
    Ok((net, trace))
}

/// Full-batch gradient descent on the mean loss with backtracking (the step
/// is halved, up to 40 times, whenever the loss would increase).
pub fn train_full_batch(net: &MlpParams, ds: &LabeledDataset, cfg: &ExperimentConfig) -> Result<(MlpParams, Vec<f64>)> {
    cfg.validate()?;
    let n = ds.len() as f64;
    let mut net = net.clone();
    let (mut l, mut g) = net.loss_and_gradient(ds)?;
    let mut trace = vec![l / n];
    let mut lr = cfg.learning_rate;
    for _ in 0..cfg.max_steps {
        let mut moved = false;
        for _ in 0..=40 {
            let mut cand = net.clone();
            cand.apply_gradient(lr / n, &g);
            let (cl, cg) = cand.loss_and_gradient(ds)?;
            if cl <= l {
                net = cand;
                l = cl;
                g = cg;
                moved = true;
                break;
            }
            lr *= 0.5;
        }
        trace.push(l / n);
        if !moved {
            break;
        }
    }
    Ok((net, trace))
}
