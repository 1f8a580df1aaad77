use crate::error::{invalid, Result};

/// Composite Simpson rule with `n` subintervals (rounded up to even, at least 16).
pub fn quad_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Result<f64> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid(format!("quadrature interval [{lo}, {hi}] is empty")));
    }
    if n < 16 {
        return Err(invalid("quadrature needs at least 16 subintervals"));
    }
    let n = n + n % 2;
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    Ok(s * h / 3.0)
}

/// Tensor-product Simpson rule over a rectangle with `n` subintervals per axis.
pub fn simpson_2d(
    f: impl Fn(f64, f64) -> f64,
    (x_lo, x_hi): (f64, f64),
    (y_lo, y_hi): (f64, f64),
    n: usize,
) -> Result<f64> {
    if !(x_lo < x_hi) || !(y_lo < y_hi) {
        return Err(invalid("empty integration rectangle"));
    }
    if n < 16 {
        return Err(invalid("quadrature needs at least 16 subintervals"));
    }
    let n = n + n % 2;
    let hx = (x_hi - x_lo) / n as f64;
    let hy = (y_hi - y_lo) / n as f64;
    let w = |i: usize| {
        if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut s = 0.0;
    for i in 0..=n {
        let x = x_lo + i as f64 * hx;
        let wi = w(i);
        for j in 0..=n {
            s += wi * w(j) * f(x, y_lo + j as f64 * hy);
        }
    }
    Ok(s * hx * hy / 9.0)
}

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + h;
            let fp = f(&xp);
            xp[i] = orig - h;
            let fm = f(&xp);
            xp[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}
