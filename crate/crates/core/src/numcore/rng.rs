use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

/// Seeded ChaCha8 generator with named sub-streams.
///
/// The key of a sub-stream is `sha256(parent_key || purpose)`, so it depends
/// only on the root seed and the chain of purpose strings, never on how many
/// draws the parent has already produced.
#[derive(Clone, Debug)]
pub struct Rng {
    key: [u8; 32],
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"genlearn.rng");
        h.update(seed.to_le_bytes());
        Self::from_key(h.finalize().into())
    }

    fn from_key(key: [u8; 32]) -> Self {
        Rng { key, inner: ChaCha8Rng::from_seed(key), spare: None }
    }

    /// Independent stream for `purpose`.
    pub fn substream(&self, purpose: &str) -> Rng {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update(purpose.as_bytes());
        Self::from_key(h.finalize().into())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Standard normal draw via the Marsaglia polar method.
    pub fn normal(&mut self) -> f64 {
        if let Some(s) = self.spare.take() {
            return s;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }

    pub fn normal_vec(&mut self, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| self.normal()).collect()
    }

    pub fn shuffle<T>(&mut self, v: &mut [T]) {
        v.shuffle(&mut self.inner);
    }

    /// Index drawn with probability proportional to `weights`.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.uniform() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}

/// `dim` independent standard normal draws.
pub fn sample_std_normal(rng: &mut Rng, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(invalid("dimension must be positive"));
    }
    Ok(rng.normal_vec(dim))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_dimension_is_rejected() {
        assert!(sample_std_normal(&mut Rng::new(1), 0).is_err());
    }

    #[test]
    fn normal_moments() {
        let mut rng = Rng::new(7);
        let xs = sample_std_normal(&mut rng, 100_000).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<u64> = {
            let mut r = Rng::new(42);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = Rng::new(42);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn substreams_ignore_parent_consumption() {
        let root = Rng::new(3);
        let mut used = Rng::new(3);
        for _ in 0..100 {
            used.next_u64();
        }
        let mut a = root.substream("init");
        let mut b = used.substream("init");
        assert_eq!(a.next_u64(), b.next_u64());
        let mut c = root.substream("batches");
        assert_ne!(root.substream("init").next_u64(), c.next_u64());
    }

    #[test]
    fn categorical_respects_zero_weights() {
        let mut rng = Rng::new(5);
        for _ in 0..1000 {
            assert_eq!(rng.categorical(&[0.0, 1.0, 0.0]), 1);
        }
    }
}
