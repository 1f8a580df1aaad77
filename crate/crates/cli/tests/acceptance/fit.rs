use std::f64::consts::LN_2;

use genlearn::neuralnet::{Activation, MlpParams, OutputHead};
use genlearn::numcore::{eigh_sym, finite_diff_grad, DenseMatrix, Rng};
use genlearn::regression::*;

use crate::support::Report;

fn residuals(ds: &LabeledDataset, w: &[f64]) -> Vec<f64> {
    let y = ds.real_targets().unwrap();
    (0..ds.len()).map(|i| y[i] - w[0] - ds.input(i).iter().zip(&w[1..]).map(|(a, b)| a * b).sum::<f64>()).collect()
}

/// Plain gradient ascent on the Gaussian log-likelihood in `w`.
fn ascent(ds: &LabeledDataset) -> Vec<f64> {
    let k = ds.dim() + 1;
    let lmax: f64 = (0..ds.len()).map(|i| 1.0 + ds.input(i).iter().map(|v| v * v).sum::<f64>()).sum();
    let mut w = vec![0.0; k];
    for _ in 0..200_000 {
        let r = residuals(ds, &w);
        let mut g = vec![0.0; k];
        for (i, ri) in r.iter().enumerate() {
            g[0] += ri;
            for j in 1..k {
                g[j] += ri * ds.input(i)[j - 1];
            }
        }
        if g.iter().all(|v| v.abs() < 1e-12) {
            break;
        }
        for j in 0..k {
            w[j] += g[j] / lmax;
        }
    }
    w
}

pub fn least_squares() -> Report {
    let mut rep = Report::default();
    let mut rng = Rng::new(101);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x = DenseMatrix::from_fn(40, 3, |_, _| rng.normal());
        let w: Vec<f64> = (0..4).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
        let y = (0..40).map(|i| w[0] + (0..3).map(|j| w[j + 1] * x[(i, j)]).sum::<f64>() + 0.5 * rng.normal()).collect();
        let ds = LabeledDataset::regression(x, y).unwrap();
        let fit = fit_linear(&ds).unwrap();
        let a = ascent(&ds);
        worst = worst.max(fit.w.iter().zip(&a).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt());
    }
    rep.check(worst < 1e-6, format!("max distance to ascent optimum {worst:.2e} over 20 datasets"));
    let mut worst_s2: f64 = 0.0;
    for _ in 0..10 {
        let k = 1 + rng.below(4);
        let n = k + 1 + rng.below(10);
        let w: Vec<f64> = (0..=k).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
        let x = DenseMatrix::from_fn(n, k, |_, _| rng.normal());
        let y = (0..n).map(|i| w[0] + (0..k).map(|j| w[j + 1] * x[(i, j)]).sum::<f64>()).collect();
        let fit = fit_linear(&LabeledDataset::regression(x, y).unwrap()).unwrap();
        worst_s2 = worst_s2.max(fit.noise_variance.abs());
    }
    rep.check(worst_s2 <= 1e-12, format!("exact-fit noise variance {worst_s2:.2e}"));
    rep
}

fn random_binary(rng: &mut Rng, n: usize, k: usize) -> LabeledDataset {
    let x = DenseMatrix::from_fn(n, k, |_, _| rng.normal());
    let labels = (0..n).map(|_| rng.below(2)).collect();
    LabeledDataset::classification(x, labels, 2).unwrap()
}

fn random_labeled(rng: &mut Rng, head: OutputHead, n: usize, k: usize, m: usize) -> LabeledDataset {
    let x = DenseMatrix::from_fn(n, k, |_, _| rng.normal());
    match head {
        OutputHead::GaussianRegression => LabeledDataset::regression(x, (0..n).map(|_| rng.normal()).collect()).unwrap(),
        OutputHead::Bernoulli => LabeledDataset::classification(x, (0..n).map(|_| rng.below(2)).collect(), 2).unwrap(),
        OutputHead::Categorical => LabeledDataset::classification(x, (0..n).map(|_| rng.below(m)).collect(), m).unwrap(),
    }
}

fn min_hidden_preactivation(net: &MlpParams, ds: &LabeledDataset) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..ds.len() {
        let (_, cache) = net.forward(ds.input(i)).unwrap();
        for pre in &cache.pre[..cache.pre.len() - 1] {
            best = pre.iter().fold(best, |b, a| b.min(a.abs()));
        }
    }
    best
}

pub fn gradients() -> Report {
    let mut rep = Report::default();
    let mut rng = Rng::new(102);
    let mut worst_logistic: f64 = 0.0;
    for _ in 0..50 {
        let k = 1 + rng.below(5);
        let ds = random_binary(&mut rng, 30, k);
        let w: Vec<f64> = (0..=k).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let g = logistic_gradient(&LogRegParams::binary(w.clone()).unwrap(), &ds).unwrap();
        let fd = finite_diff_grad(|v| logistic_loglik(&LogRegParams::binary(v.to_vec()).unwrap(), &ds).unwrap() * LN_2, &w, 1e-6);
        for (a, b) in g.iter().zip(&fd) {
            worst_logistic = worst_logistic.max((a - b).abs() / a.abs().max(b.abs()).max(1e-3));
        }
    }
    rep.check(worst_logistic < 1e-5, format!("logistic gradient rel. error {worst_logistic:.2e}"));

    let acts = [Activation::Identity, Activation::Logistic, Activation::Relu];
    let heads = [OutputHead::GaussianRegression, OutputHead::Bernoulli, OutputHead::Categorical];
    let mut worst_bp: f64 = 0.0;
    for trial in 0..50 {
        let hidden: Vec<usize> = (0..trial % 4).map(|_| 1 + rng.below(8)).collect();
        let (act, head) = (acts[trial % 3], heads[(trial / 3) % 3]);
        let k = 1 + rng.below(4);
        let m = if head == OutputHead::Categorical { 2 + rng.below(3) } else { 1 };
        let (net, ds) = loop {
            let net = MlpParams::init(&mut rng, k, &hidden, act, m, head).unwrap();
            let ds = random_labeled(&mut rng, head, 6, k, m);
            if act != Activation::Relu || min_hidden_preactivation(&net, &ds) > 1e-4 {
                break (net, ds);
            }
        };
        let g = net.backward(&ds).unwrap().to_flat();
        let fd = finite_diff_grad(
            |w| {
                let mut n = net.clone();
                n.set_flat(w);
                n.loss(&ds).unwrap()
            },
            &net.to_flat(),
            1e-6,
        );
        for (a, b) in g.iter().zip(&fd) {
            worst_bp = worst_bp.max((a - b).abs() / a.abs().max(b.abs()).max(1e-3));
        }
    }
    rep.check(worst_bp < 1e-5, format!("backprop rel. error {worst_bp:.2e} over 50 architectures"));

    let mut top = f64::NEG_INFINITY;
    for _ in 0..200 {
        let k = 1 + rng.below(5);
        let n = 5 + rng.below(30);
        let ds = random_binary(&mut rng, n, k);
        let w: Vec<f64> = (0..=k).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
        let h = logistic_hessian(&LogRegParams::binary(w).unwrap(), &ds);
        top = top.max(eigh_sym(&h).unwrap().values[0]);
    }
    rep.check(top <= 1e-9, format!("max Hessian eigenvalue {top:.2e} over 200 instances"));
    rep
}
