//! Numerical substrate: dense matrices, a seeded splittable RNG, symmetric
//! eigendecomposition, Cholesky factorisation and 1-D quadrature.

mod linalg;
mod matrix;
mod quad;
mod rng;

pub use linalg::{cholesky, eigh_sym, Cholesky, SymEigen};
pub use matrix::DenseMatrix;
pub use quad::{finite_diff_grad, quad_1d, simpson_2d};
pub use rng::{sample_std_normal, Rng};

/// `ln Σ exp(v_i)` computed with max subtraction.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Logistic sigmoid, evaluated without overflow for large |a|.
pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}
