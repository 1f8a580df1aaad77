//! Reference computations used by the integration and acceptance tests.
//! They avoid the library's factorizations and closed forms.

#![allow(dead_code)]

use std::f64::consts::PI;

use genlearn::numcore::{DenseMatrix, Rng};

/// Gauss–Jordan inverse with partial pivoting, plus the determinant.
pub fn inverse_and_det(a: &DenseMatrix) -> (DenseMatrix, f64) {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = a.to_rows();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        if p != c {
            m.swap(p, c);
            inv.swap(p, c);
            det = -det;
        }
        let piv = m[c][c];
        det *= piv;
        for j in 0..n {
            m[c][j] /= piv;
            inv[c][j] /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                for j in 0..n {
                    m[r][j] -= f * m[c][j];
                    inv[r][j] -= f * inv[c][j];
                }
            }
        }
    }
    (DenseMatrix::from_rows(&inv).unwrap(), det)
}

/// Dense Gaussian density evaluated from the explicit formula.
pub fn gaussian_pdf(x: &[f64], mean: &[f64], cov: &DenseMatrix) -> f64 {
    let (inv, det) = inverse_and_det(cov);
    let d: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let q: f64 = (0..d.len()).map(|i| (0..d.len()).map(|j| d[i] * inv[(i, j)] * d[j]).sum::<f64>()).sum();
    (-0.5 * q).exp() / ((2.0 * PI).powi(d.len() as i32) * det).sqrt()
}

/// Random symmetric positive-definite matrix with eigenvalues bounded below.
pub fn random_spd(rng: &mut Rng, m: usize, floor: f64) -> DenseMatrix {
    let b = DenseMatrix::from_fn(m, m, |_, _| rng.normal());
    let mut s = b.matmul(&b.transpose()).scale(1.0 / m as f64);
    s.add_diag(floor);
    s
}

/// Random orthogonal matrix by Gram–Schmidt on Gaussian columns.
pub fn random_orthogonal(rng: &mut Rng, k: usize) -> DenseMatrix {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < k {
        let mut v = rng.normal_vec(k);
        for c in &cols {
            let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-6 {
            cols.push(v.iter().map(|a| a / n).collect());
        }
    }
    DenseMatrix::from_fn(k, k, |r, c| cols[c][r])
}

/// PPCA log-likelihood (nats) from the explicit Gaussian formula with `C = WWᵀ + σ²I`.
pub fn ppca_loglik_dense(w: &DenseMatrix, mean: &[f64], s2: f64, data: &DenseMatrix) -> f64 {
    let m = w.rows();
    let mut c = w.matmul(&w.transpose());
    for i in 0..m {
        c[(i, i)] += s2;
    }
    let (inv, det) = inverse_and_det(&c);
    let mut total = 0.0;
    for r in 0..data.rows() {
        let d: Vec<f64> = data.row(r).iter().zip(mean).map(|(a, b)| a - b).collect();
        let q: f64 = (0..m).map(|i| (0..m).map(|j| d[i] * inv[(i, j)] * d[j]).sum::<f64>()).sum();
        total += -0.5 * (m as f64 * (2.0 * PI).ln() + det.ln() + q);
    }
    total
}

/// Best PPCA log-likelihood found by gradient ascent over `(W, μ, ln σ²)`
/// from `starts` random initialisations, `steps` iterations each.
pub fn ppca_ascent(data: &DenseMatrix, k: usize, starts: usize, steps: usize, rng: &mut Rng) -> f64 {
    let (n, m) = data.shape();
    let nf = n as f64;
    let mut best = f64::NEG_INFINITY;
    for _ in 0..starts {
        let mut w = DenseMatrix::from_fn(m, k, |_, _| rng.normal());
        let mut mu = rng.normal_vec(m);
        let mut ls2 = 0.0f64;
        let mut cur = ppca_loglik_dense(&w, &mu, ls2.exp(), data) / nf;
        let mut lr = 0.1;
        for _ in 0..steps {
            let mut c = w.matmul(&w.transpose());
            for i in 0..m {
                c[(i, i)] += ls2.exp();
            }
            let (ci, _) = inverse_and_det(&c);
            let mut sm = DenseMatrix::zeros(m, m);
            for r in 0..n {
                let d: Vec<f64> = data.row(r).iter().zip(&mu).map(|(a, b)| a - b).collect();
                sm.add_outer(1.0 / nf, &d, &d);
            }
            let g = ci.matmul(&sm).matmul(&ci).sub(&ci).scale(0.5);
            let gw = g.matmul(&w).scale(2.0);
            let gs = ls2.exp() * g.trace();
            let mean_dev: Vec<f64> = (0..m).map(|j| (0..n).map(|r| data[(r, j)] - mu[j]).sum::<f64>() / nf).collect();
            let gmu = ci.mat_vec(&mean_dev);
            loop {
                let w2 = w.add(&gw.scale(lr));
                let mu2: Vec<f64> = mu.iter().zip(&gmu).map(|(a, b)| a + lr * b).collect();
                let l2 = ls2 + lr * gs;
                let v = ppca_loglik_dense(&w2, &mu2, l2.exp(), data) / nf;
                if v >= cur {
                    w = w2;
                    mu = mu2;
                    ls2 = l2;
                    cur = v;
                    lr *= 1.2;
                    break;
                }
                lr *= 0.5;
                if lr < 1e-14 {
                    break;
                }
            }
        }
        best = best.max(cur * nf);
    }
    best
}

/// Samples from `μ + W z + σ ε` for a random generating model with spread spectrum.
pub fn ppca_dataset(rng: &mut Rng, n: usize, m: usize, k: usize) -> DenseMatrix {
    let w = DenseMatrix::from_fn(m, k, |_, c| rng.normal() * (2.0 + c as f64));
    let mu = rng.normal_vec(m);
    let mut out = DenseMatrix::zeros(n, m);
    for r in 0..n {
        let z = rng.normal_vec(k);
        let wz = w.mat_vec(&z);
        for j in 0..m {
            out[(r, j)] = mu[j] + wz[j] + 0.5 * rng.normal();
        }
    }
    out
}

/// Posterior of `Z | X = x` by conditioning the joint Gaussian
/// `[Z; X] ~ N([0; μ], [[I, Wᵀ], [W, C]])`.
pub fn ppca_joint_conditioning(w: &DenseMatrix, mean: &[f64], s2: f64, x: &[f64]) -> (Vec<f64>, DenseMatrix) {
    let m = w.rows();
    let k = w.cols();
    let mut c = w.matmul(&w.transpose());
    for i in 0..m {
        c[(i, i)] += s2;
    }
    let (ci, _) = inverse_and_det(&c);
    let d: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let wt = w.transpose();
    let gain = wt.matmul(&ci);
    let pm = gain.mat_vec(&d);
    let pc = DenseMatrix::identity(k).sub(&gain.matmul(w));
    (pm, pc)
}

/// Log-determinant of a symmetric positive-definite matrix by elimination.
pub fn log_det(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut m = a.to_rows();
    let mut ld = 0.0;
    for c in 0..n {
        let piv = m[c][c];
        ld += piv.ln();
        for r in c + 1..n {
            let f = m[r][c] / piv;
            for j in c..n {
                m[r][j] -= f * m[c][j];
            }
        }
    }
    ld
}
