//! Conditional maximum-likelihood fitting of linear, logistic and softmax
//! regression models. Datasets never carry an intercept column; the leading
//! `1` is prepended inside every fit and prediction.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::numcore::{cholesky, dot, eigh_sym, log_sum_exp, sigmoid, DenseMatrix};

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targets {
    Real(Vec<f64>),
    Classes { labels: Vec<usize>, num_classes: usize },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Real(v) => v.len(),
            Targets::Classes { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Inputs `x_i` (one per row, no intercept) paired with targets `y_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    inputs: DenseMatrix,
    targets: Targets,
}

impl LabeledDataset {
    pub fn new(inputs: DenseMatrix, targets: Targets) -> Result<Self> {
        if inputs.rows() != targets.len() {
            return Err(invalid(format!("{} input rows but {} targets", inputs.rows(), targets.len())));
        }
        match &targets {
            Targets::Real(v) if v.iter().any(|y| !y.is_finite()) => {
                return Err(invalid("targets must be finite"))
            }
            Targets::Classes { labels, num_classes } if labels.iter().any(|c| c >= num_classes) => {
                return Err(invalid("class index out of range"))
            }
            _ => {}
        }
        Ok(LabeledDataset { inputs, targets })
    }

    pub fn regression(inputs: DenseMatrix, y: Vec<f64>) -> Result<Self> {
        Self::new(inputs, Targets::Real(y))
    }

    pub fn classification(inputs: DenseMatrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        Self::new(inputs, Targets::Classes { labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of raw features `K`.
    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn inputs(&self) -> &DenseMatrix {
        &self.inputs
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn input(&self, i: usize) -> &[f64] {
        self.inputs.row(i)
    }

    pub fn real_targets(&self) -> Result<&[f64]> {
        match &self.targets {
            Targets::Real(v) => Ok(v),
            _ => Err(invalid("expected real-valued targets")),
        }
    }

    pub fn class_targets(&self) -> Result<(&[usize], usize)> {
        match &self.targets {
            Targets::Classes { labels, num_classes } => Ok((labels, *num_classes)),
            _ => Err(invalid("expected class-index targets")),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let targets = match &self.targets {
            Targets::Real(v) => Targets::Real(idx.iter().map(|&i| v[i]).collect()),
            Targets::Classes { labels, num_classes } => Targets::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
        };
        LabeledDataset { inputs: self.inputs.select_rows(idx), targets }
    }

    /// Design matrix with a leading column of ones.
    pub fn design(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.len(), self.dim() + 1, |r, c| if c == 0 { 1.0 } else { self.inputs[(r, c - 1)] })
    }
}

fn augment(x: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len() + 1);
    v.push(1.0);
    v.extend_from_slice(x);
    v
}

/// Gaussian linear model `y ~ N(wᵀ[1; x], σ²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinRegParams {
    /// Intercept first.
    pub w: Vec<f64>,
    pub noise_variance: f64,
    pub rss: f64,
    /// Set when the residuals vanish and `noise_variance` is zero.
    pub exact_fit: bool,
}

/// Least-squares fit via the normal equations.
pub fn fit_linear(ds: &LabeledDataset) -> Result<LinRegParams> {
    let y = ds.real_targets()?;
    let n = ds.len();
    let k = ds.dim();
    if n < k + 1 {
        return Err(invalid(format!("need at least {} samples for {} features, got {n}", k + 1, k)));
    }
    let x = ds.design();
    let xtx = x.gram();
    let eig = eigh_sym(&xtx)?;
    let (hi, lo) = (eig.values[0], eig.values[k]);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > 1e12 {
        return Err(Error::SingularDesign { condition });
    }
    let w = cholesky(&xtx).map_err(|_| Error::SingularDesign { condition })?.solve(&x.tr_mat_vec(y));
    let rss: f64 = (0..n).map(|i| (y[i] - dot(&w, x.row(i))).powi(2)).sum();
    let scale: f64 = y.iter().map(|v| v * v).sum::<f64>().max(1.0);
    let exact_fit = rss <= 1e-24 * scale;
    let rss = if exact_fit { 0.0 } else { rss };
    Ok(LinRegParams { w, noise_variance: rss / n as f64, rss, exact_fit })
}

pub fn predict_linear(params: &LinRegParams, x: &[f64]) -> Result<f64> {
    if x.len() + 1 != params.w.len() {
        return Err(invalid(format!("expected {} features, got {}", params.w.len() - 1, x.len())));
    }
    Ok(dot(&params.w, &augment(x)))
}

/// Conditional log-likelihood of the Gaussian linear model in bits.
pub fn linear_loglik(params: &LinRegParams, ds: &LabeledDataset) -> Result<f64> {
    let y = ds.real_targets()?;
    let s2 = params.noise_variance;
    let mut ll = 0.0;
    for (i, yi) in y.iter().enumerate() {
        let r = yi - predict_linear(params, ds.input(i))?;
        ll += -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - r * r / (2.0 * s2);
    }
    Ok(ll / LN2)
}

/// Weight vector (binary, one row) or one weight row per class (multiclass).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub weights: DenseMatrix,
}

impl LogRegParams {
    pub fn binary(w: Vec<f64>) -> Result<Self> {
        let k = w.len();
        Ok(LogRegParams { weights: DenseMatrix::new(1, k, w)? })
    }

    pub fn is_binary(&self) -> bool {
        self.weights.rows() == 1
    }

    /// Class probabilities at `x`: `[1−p, p]` for a binary model.
    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() + 1 != self.weights.cols() {
            return Err(invalid(format!("expected {} features, got {}", self.weights.cols() - 1, x.len())));
        }
        let logits = self.weights.mat_vec(&augment(x));
        if self.is_binary() {
            let p = sigmoid(logits[0]);
            Ok(vec![1.0 - p, p])
        } else {
            Ok(softmax(&logits))
        }
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        let p = self.probabilities(x)?;
        Ok(argmax(&p))
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|a| (a - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `σ'(a) = σ(a)(1 − σ(a))`.
pub fn sigmoid_derivative(a: f64) -> f64 {
    let s = sigmoid(a);
    s * (1.0 - s)
}

/// `ln σ(a)` without cancellation.
pub(crate) fn ln_sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        -(-a).exp().ln_1p()
    } else {
        a - a.exp().ln_1p()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    MaxSteps,
    LineSearchStalled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineSearch {
    /// Halve the step (up to 40 times) whenever the objective would decrease.
    Backtracking,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientFit {
    pub params: LogRegParams,
    /// Log-likelihood in bits, starting with the value at `w = 0`.
    pub trace: Vec<f64>,
    pub stop: StopReason,
    pub steps: usize,
}

/// Binary log-likelihood in bits.
pub fn logistic_loglik(params: &LogRegParams, ds: &LabeledDataset) -> Result<f64> {
    let (labels, m) = ds.class_targets()?;
    if m != 2 || !params.is_binary() {
        return Err(invalid("binary log-likelihood needs two classes and a binary model"));
    }
    let mut ll = 0.0;
    for (i, y) in labels.iter().enumerate() {
        let a = dot(params.weights.row(0), &augment(ds.input(i)));
        ll += if *y == 1 { ln_sigmoid(a) } else { ln_sigmoid(-a) };
    }
    Ok(ll / LN2)
}

/// `Σ (y_i − p_i) x̃_i`.
pub fn logistic_gradient(params: &LogRegParams, ds: &LabeledDataset) -> Result<Vec<f64>> {
    let (labels, _) = ds.class_targets()?;
    let w = params.weights.row(0);
    let mut g = vec![0.0; w.len()];
    for (i, y) in labels.iter().enumerate() {
        let x = augment(ds.input(i));
        let r = *y as f64 - sigmoid(dot(w, &x));
        for (gj, xj) in g.iter_mut().zip(&x) {
            *gj += r * xj;
        }
    }
    Ok(g)
}

/// `−Σ p_i (1 − p_i) x̃_i x̃_iᵀ`.
pub fn logistic_hessian(params: &LogRegParams, ds: &LabeledDataset) -> DenseMatrix {
    let k = params.weights.cols();
    let mut h = DenseMatrix::zeros(k, k);
    for i in 0..ds.len() {
        let x = augment(ds.input(i));
        let p = sigmoid(dot(params.weights.row(0), &x));
        h.add_outer(-p * (1.0 - p), &x, &x);
    }
    h
}

/// Multiclass log-likelihood in bits.
pub fn multiclass_loglik(params: &LogRegParams, ds: &LabeledDataset) -> Result<f64> {
    let (labels, _) = ds.class_targets()?;
    let mut ll = 0.0;
    for (i, y) in labels.iter().enumerate() {
        let logits = params.weights.mat_vec(&augment(ds.input(i)));
        ll += logits[*y] - log_sum_exp(&logits);
    }
    Ok(ll / LN2)
}

/// `Σ (onehot(y_i) − p_i) x̃_iᵀ`.
pub fn multiclass_gradient(params: &LogRegParams, ds: &LabeledDataset) -> Result<DenseMatrix> {
    let (labels, _) = ds.class_targets()?;
    let mut g = DenseMatrix::zeros(params.weights.rows(), params.weights.cols());
    for (i, y) in labels.iter().enumerate() {
        let x = augment(ds.input(i));
        let mut r = softmax(&params.weights.mat_vec(&x));
        for v in r.iter_mut() {
            *v = -*v;
        }
        r[*y] += 1.0;
        g.add_outer(1.0, &r, &x);
    }
    Ok(g)
}

fn ascend(
    start: DenseMatrix,
    cfg: &ExperimentConfig,
    line_search: LineSearch,
    objective: impl Fn(&LogRegParams) -> Result<f64>,
    gradient: impl Fn(&LogRegParams) -> Result<DenseMatrix>,
) -> Result<GradientFit> {
    cfg.validate()?;
    let mut params = LogRegParams { weights: start };
    let mut ll = objective(&params)?;
    let mut trace = vec![ll];
    let mut gamma = cfg.learning_rate;
    let mut stop = StopReason::MaxSteps;
    let mut steps = 0;
    for step in 0..cfg.max_steps {
        let g = gradient(&params)?;
        if g.max_abs() < 1e-8 {
            stop = StopReason::GradientTolerance;
            break;
        }
        let mut accepted = None;
        for _ in 0..=40 {
            let mut w = params.weights.clone();
            w.axpy(gamma, &g);
            let cand = LogRegParams { weights: w };
            if line_search == LineSearch::Fixed {
                if cand.weights.frobenius_norm() > 1e8 || cand.weights.data().iter().any(|v| !v.is_finite()) {
                    return Err(Error::StepSizeTooLarge { step });
                }
                let l = objective(&cand)?;
                accepted = Some((cand, l));
                break;
            }
            let l = objective(&cand)?;
            if l >= ll {
                accepted = Some((cand, l));
                break;
            }
            gamma *= 0.5;
        }
        match accepted {
            Some((p, l)) => {
                params = p;
                ll = l;
                trace.push(ll);
                steps = step + 1;
            }
            None => {
                stop = StopReason::LineSearchStalled;
                break;
            }
        }
    }
    Ok(GradientFit { params, trace, stop, steps })
}

/// Gradient ascent on the binary conditional log-likelihood from `w = 0`
/// with backtracking.
pub fn fit_logistic(ds: &LabeledDataset, cfg: &ExperimentConfig) -> Result<GradientFit> {
    fit_logistic_with(ds, cfg, LineSearch::Backtracking)
}

pub fn fit_logistic_with(ds: &LabeledDataset, cfg: &ExperimentConfig, line_search: LineSearch) -> Result<GradientFit> {
    let (_, m) = ds.class_targets()?;
    if m != 2 {
        return Err(invalid("logistic regression needs binary targets"));
    }
    let k = ds.dim() + 1;
    ascend(
        DenseMatrix::zeros(1, k),
        cfg,
        line_search,
        |p| logistic_loglik(p, ds),
        |p| Ok(DenseMatrix::new(1, k, logistic_gradient(p, ds)?)?),
    )
}

/// Softmax regression by gradient ascent from zero weights.
pub fn fit_multiclass(ds: &LabeledDataset, cfg: &ExperimentConfig) -> Result<GradientFit> {
    let (labels, m) = ds.class_targets()?;
    let mut seen = vec![false; m];
    for l in labels {
        seen[*l] = true;
    }
    if m < 2 || seen.iter().filter(|s| **s).count() < 2 {
        return Err(invalid("multiclass regression needs at least two classes present"));
    }
    ascend(
        DenseMatrix::zeros(m, ds.dim() + 1),
        cfg,
        LineSearch::Backtracking,
        |p| multiclass_loglik(p, ds),
        |p| multiclass_gradient(p, ds),
    )
}
