//! Divergences between probability mass functions on a finite alphabet.
//!
//! Everything logarithmic is reported in bits. Infinite divergences are
//! returned as `f64::INFINITY`, which saturates under addition and compares
//! correctly.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numcore::DenseMatrix;

const SUM_TOL: f64 = 1e-12;

/// Probability mass function over `{0, .., len-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pmf(Vec<f64>);

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("pmf over an empty alphabet"));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(invalid("pmf entries must be finite and non-negative"));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(invalid(format!("pmf sums to {s}, not 1")));
        }
        Ok(Pmf(probs))
    }

    /// Normalises non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let s: f64 = weights.iter().sum();
        if !(s > 0.0) || !s.is_finite() || weights.iter().any(|w| *w < 0.0) {
            return Err(invalid("weights must be non-negative with a positive finite sum"));
        }
        Self::new(weights.iter().map(|w| w / s).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("pmf over an empty alphabet"));
        }
        Ok(Pmf(vec![1.0 / n as f64; n]))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Entropy in bits.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|p| **p > 0.0).map(|p| p * p.log2()).sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for Pmf {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Pmf::new(v)
    }
}

impl From<Pmf> for Vec<f64> {
    fn from(p: Pmf) -> Self {
        p.0
    }
}

fn check_alphabets(p: &Pmf, q: &Pmf) -> Result<()> {
    if p.len() != q.len() {
        return Err(invalid(format!("alphabet sizes differ: {} vs {}", p.len(), q.len())));
    }
    Ok(())
}

/// `-Σ p log₂ q` in bits.
pub fn cross_entropy(p: &Pmf, q: &Pmf) -> Result<f64> {
    check_alphabets(p, q)?;
    let mut h = 0.0;
    for (pi, qi) in p.probs().iter().zip(q.probs()) {
        if *pi == 0.0 {
            continue;
        }
        if *qi == 0.0 {
            return Ok(f64::INFINITY);
        }
        h -= pi * qi.log2();
    }
    Ok(h)
}

/// Relative entropy `D(p‖q)` in bits.
pub fn kl_divergence(p: &Pmf, q: &Pmf) -> Result<f64> {
    f_divergence(p, q, &FDivSpec::kl())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Generator {
    Kl,
    ReverseKl,
    Tv,
    HockeyStick { gamma: f64 },
    ChiSq,
    Js,
    HellingerSq,
    RenyiGen { alpha: f64 },
    #[serde(skip)]
    Custom(CustomGenerator),
}

/// User-supplied convex generator together with its two boundary limits:
/// `f(0) = lim_{t→0} f(t)` and `lim_{u→∞} f(u)/u`.
#[derive(Clone, Copy, Debug)]
pub struct CustomGenerator {
    pub f: fn(f64) -> f64,
    pub at_zero: f64,
    pub slope_at_infinity: f64,
}

/// A validated f-divergence generator.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(try_from = "Generator", into = "Generator")]
pub struct FDivSpec {
    generator: Generator,
}

impl TryFrom<Generator> for FDivSpec {
    type Error = Error;
    fn try_from(g: Generator) -> Result<Self> {
        FDivSpec::new(g)
    }
}

impl From<FDivSpec> for Generator {
    fn from(s: FDivSpec) -> Self {
        s.generator
    }
}

impl FDivSpec {
    /// Validates parameters, `f(1) = 0` and midpoint convexity on a grid.
    pub fn new(generator: Generator) -> Result<Self> {
        match generator {
            Generator::HockeyStick { gamma } if !(gamma >= 1.0) || !gamma.is_finite() => {
                return Err(Error::InvalidSpec(format!("hockey-stick needs gamma >= 1, got {gamma}")))
            }
            Generator::RenyiGen { alpha } if !(alpha > 0.0) || alpha == 1.0 || !alpha.is_finite() => {
                return Err(Error::InvalidSpec(format!("renyi generator needs alpha > 0, alpha != 1, got {alpha}")))
            }
            _ => {}
        }
        let spec = FDivSpec { generator };
        spec.check_shape()?;
        Ok(spec)
    }

    pub fn kl() -> Self {
        FDivSpec { generator: Generator::Kl }
    }
    pub fn reverse_kl() -> Self {
        FDivSpec { generator: Generator::ReverseKl }
    }
    pub fn tv() -> Self {
        FDivSpec { generator: Generator::Tv }
    }
    pub fn chi_sq() -> Self {
        FDivSpec { generator: Generator::ChiSq }
    }
    pub fn js() -> Self {
        FDivSpec { generator: Generator::Js }
    }
    pub fn hellinger_sq() -> Self {
        FDivSpec { generator: Generator::HellingerSq }
    }
    pub fn hockey_stick(gamma: f64) -> Result<Self> {
        Self::new(Generator::HockeyStick { gamma })
    }
    pub fn renyi_gen(alpha: f64) -> Result<Self> {
        Self::new(Generator::RenyiGen { alpha })
    }

    pub fn custom(f: fn(f64) -> f64, at_zero: f64, slope_at_infinity: f64) -> Result<Self> {
        Self::new(Generator::Custom(CustomGenerator { f, at_zero, slope_at_infinity }))
    }

    /// Every parameter-free named generator plus representative parameterised ones.
    pub fn named() -> Vec<FDivSpec> {
        vec![
            Self::kl(),
            Self::reverse_kl(),
            Self::tv(),
            Self::hockey_stick(1.5).expect("valid"),
            Self::chi_sq(),
            Self::js(),
            Self::hellinger_sq(),
            Self::renyi_gen(0.5).expect("valid"),
            Self::renyi_gen(3.0).expect("valid"),
        ]
    }

    pub fn generator(&self) -> Generator {
        self.generator
    }

    pub fn name(&self) -> String {
        match self.generator {
            Generator::Kl => "kl".into(),
            Generator::ReverseKl => "reverse_kl".into(),
            Generator::Tv => "tv".into(),
            Generator::HockeyStick { gamma } => format!("hockey_stick({gamma})"),
            Generator::ChiSq => "chi_sq".into(),
            Generator::Js => "js".into(),
            Generator::HellingerSq => "hellinger_sq".into(),
            Generator::RenyiGen { alpha } => format!("renyi_gen({alpha})"),
            Generator::Custom(_) => "custom".into(),
        }
    }

    /// True when the value is measured in bits.
    pub fn is_logarithmic(&self) -> bool {
        matches!(self.generator, Generator::Kl | Generator::ReverseKl | Generator::Js)
    }

    /// `f(t)` for `t > 0`.
    pub fn eval(&self, t: f64) -> f64 {
        match self.generator {
            Generator::Kl => t * t.log2(),
            Generator::ReverseKl => -t.log2(),
            Generator::Tv => 0.5 * (t - 1.0).abs(),
            Generator::HockeyStick { gamma } => (t - gamma).max(0.0),
            Generator::ChiSq => (t - 1.0) * (t - 1.0),
            Generator::Js => t * (2.0 * t / (t + 1.0)).log2() + (2.0 / (t + 1.0)).log2(),
            Generator::HellingerSq => 0.5 * (t.sqrt() - 1.0).powi(2),
            Generator::RenyiGen { alpha } => (t.powf(alpha) - 1.0) / (alpha - 1.0),
            Generator::Custom(c) => (c.f)(t),
        }
    }

    /// `lim_{t→0} f(t)`.
    pub fn at_zero(&self) -> f64 {
        match self.generator {
            Generator::Kl => 0.0,
            Generator::ReverseKl => f64::INFINITY,
            Generator::Tv => 0.5,
            Generator::HockeyStick { .. } => 0.0,
            Generator::ChiSq => 1.0,
            Generator::Js => 1.0,
            Generator::HellingerSq => 0.5,
            Generator::RenyiGen { alpha } => 1.0 / (1.0 - alpha),
            Generator::Custom(c) => c.at_zero,
        }
    }

    /// `lim_{u→∞} f(u)/u`, so that `0·f(a/0) = a · slope_at_infinity`.
    pub fn slope_at_infinity(&self) -> f64 {
        match self.generator {
            Generator::Kl => f64::INFINITY,
            Generator::ReverseKl => 0.0,
            Generator::Tv => 0.5,
            Generator::HockeyStick { .. } => 1.0,
            Generator::ChiSq => f64::INFINITY,
            Generator::Js => 1.0,
            Generator::HellingerSq => 0.5,
            Generator::RenyiGen { alpha } => {
                if alpha > 1.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Generator::Custom(c) => c.slope_at_infinity,
        }
    }

    /// One term `q·f(p/q)` including the boundary conventions.
    pub fn term(&self, p: f64, q: f64) -> f64 {
        if p == 0.0 && q == 0.0 {
            return 0.0;
        }
        if q == 0.0 {
            let s = self.slope_at_infinity();
            return if s == f64::INFINITY { f64::INFINITY } else { p * s };
        }
        if p == 0.0 {
            let z = self.at_zero();
            return if z == f64::INFINITY { f64::INFINITY } else { q * z };
        }
        match self.generator {
            Generator::Kl => p * (p / q).log2(),
            Generator::ReverseKl => q * (q / p).log2(),
            Generator::Tv => 0.5 * (p - q).abs(),
            Generator::HockeyStick { gamma } => (p - gamma * q).max(0.0),
            Generator::ChiSq => (p - q) * (p - q) / q,
            Generator::Js => {
                let s = p + q;
                p * (2.0 * p / s).log2() + q * (2.0 * q / s).log2()
            }
            Generator::HellingerSq => 0.5 * (p.sqrt() - q.sqrt()).powi(2),
            Generator::RenyiGen { alpha } => (p.powf(alpha) * q.powf(1.0 - alpha) - q) / (alpha - 1.0),
            Generator::Custom(c) => q * (c.f)(p / q),
        }
    }

    fn check_shape(&self) -> Result<()> {
        let f1 = self.eval(1.0);
        if !(f1.abs() <= 1e-12) {
            return Err(Error::InvalidSpec(format!("{}: f(1) = {f1}, expected 0", self.name())));
        }
        let grid: Vec<f64> = (0..41).map(|i| 10f64.powf(-2.0 + 0.1 * i as f64)).collect();
        for (i, &a) in grid.iter().enumerate() {
            for &b in &grid[i + 1..] {
                let (fa, fb, fm) = (self.eval(a), self.eval(b), self.eval(0.5 * (a + b)));
                let tol = 1e-12 * fa.abs().max(fb.abs()).max(1.0);
                if !(fm <= 0.5 * (fa + fb) + tol) {
                    return Err(Error::InvalidSpec(format!(
                        "{}: midpoint convexity fails between {a} and {b}",
                        self.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `Σ q f(p/q)` with the boundary conventions of [`FDivSpec::term`].
pub fn f_divergence(p: &Pmf, q: &Pmf, spec: &FDivSpec) -> Result<f64> {
    check_alphabets(p, q)?;
    Ok(p.probs().iter().zip(q.probs()).map(|(a, b)| spec.term(*a, *b)).sum())
}

/// `D(p‖m) + D(q‖m)` with `m = (p+q)/2`, in bits; ranges over `[0, 2]`.
pub fn js_divergence(p: &Pmf, q: &Pmf) -> Result<f64> {
    check_alphabets(p, q)?;
    let m = Pmf(p.probs().iter().zip(q.probs()).map(|(a, b)| 0.5 * (a + b)).collect());
    Ok(kl_divergence(p, &m)? + kl_divergence(q, &m)?)
}

/// `(1/√2) ‖√p − √q‖₂`, in `[0, 1]`.
pub fn hellinger(p: &Pmf, q: &Pmf) -> Result<f64> {
    check_alphabets(p, q)?;
    let s: f64 = p.probs().iter().zip(q.probs()).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
    Ok((0.5 * s).sqrt())
}

/// Total variation `½ Σ |p − q|`.
pub fn total_variation(p: &Pmf, q: &Pmf) -> Result<f64> {
    f_divergence(p, q, &FDivSpec::tv())
}

/// Rényi divergence of order `alpha` in bits, computed from the f-divergence
/// with generator `(t^α − 1)/(α − 1)`.
pub fn renyi_divergence(p: &Pmf, q: &Pmf, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) || alpha == 1.0 || !alpha.is_finite() {
        return Err(invalid(format!("renyi order must be positive and != 1, got {alpha}")));
    }
    let d = f_divergence(p, q, &FDivSpec::renyi_gen(alpha)?)?;
    if d == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let inner = 1.0 + (alpha - 1.0) * d;
    if inner <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(inner.log2() / (alpha - 1.0))
}

/// Row-stochastic transition matrix `p(y|x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    transition: DenseMatrix,
}

impl Channel {
    pub fn new(transition: DenseMatrix) -> Result<Self> {
        for r in 0..transition.rows() {
            Pmf::new(transition.row(r).to_vec())
                .map_err(|e| invalid(format!("channel row {r}: {e}")))?;
        }
        Ok(Channel { transition })
    }

    pub fn identity(n: usize) -> Self {
        Channel { transition: DenseMatrix::identity(n) }
    }

    /// Channel whose rows are all `row`.
    pub fn constant(inputs: usize, row: &Pmf) -> Self {
        Channel { transition: DenseMatrix::from_fn(inputs, row.len(), |_, c| row.probs()[c]) }
    }

    pub fn inputs(&self) -> usize {
        self.transition.rows()
    }

    pub fn outputs(&self) -> usize {
        self.transition.cols()
    }

    pub fn row(&self, x: usize) -> &[f64] {
        self.transition.row(x)
    }

    pub fn transition(&self) -> &DenseMatrix {
        &self.transition
    }

    /// Output marginal `Σ_x p(x) p(y|x)`.
    pub fn apply(&self, p: &Pmf) -> Result<Pmf> {
        if p.len() != self.inputs() {
            return Err(invalid(format!(
                "pmf over {} symbols fed to a channel with {} inputs",
                p.len(),
                self.inputs()
            )));
        }
        Pmf::new(self.transition.tr_mat_vec(p.probs()))
    }
}

/// Output marginals of `p` and `q` after passing through `ch`.
pub fn data_processed(p: &Pmf, q: &Pmf, ch: &Channel) -> Result<(Pmf, Pmf)> {
    check_alphabets(p, q)?;
    Ok((ch.apply(p)?, ch.apply(q)?))
}

/// Conditional cross entropy `−Σ_x p(x) Σ_y p(y|x) log₂ q(y|x)` in bits.
pub fn conditional_cross_entropy(px: &Pmf, p_y_x: &Channel, q_y_x: &Channel) -> Result<f64> {
    if px.len() != p_y_x.inputs() || p_y_x.transition().shape() != q_y_x.transition().shape() {
        return Err(invalid("conditional distributions do not match the marginal"));
    }
    let mut h = 0.0;
    for x in 0..px.len() {
        if px.probs()[x] == 0.0 {
            continue;
        }
        let row = cross_entropy(&Pmf(p_y_x.row(x).to_vec()), &Pmf(q_y_x.row(x).to_vec()))?;
        h += px.probs()[x] * row;
    }
    Ok(h)
}

/// Conditional relative entropy `Σ_x p(x) D(p(·|x) ‖ q(·|x))` in bits.
pub fn conditional_kl(px: &Pmf, p_y_x: &Channel, q_y_x: &Channel) -> Result<f64> {
    if px.len() != p_y_x.inputs() || p_y_x.transition().shape() != q_y_x.transition().shape() {
        return Err(invalid("conditional distributions do not match the marginal"));
    }
    let mut d = 0.0;
    for x in 0..px.len() {
        if px.probs()[x] == 0.0 {
            continue;
        }
        let row = kl_divergence(&Pmf(p_y_x.row(x).to_vec()), &Pmf(q_y_x.row(x).to_vec()))?;
        d += px.probs()[x] * row;
    }
    Ok(d)
}

/// Two-player games whose payoff is separable across the alphabet.
///
/// With discriminator output `d` at a point carrying masses `p` (data) and
/// `q` (model), the per-point payoffs are
/// * `GanLog`: `p log₂ d + q log₂(1−d)` with `d ∈ (0,1)`;
/// * `FganA`: `p d − γ q d` with `|d| ≤ ½`;
/// * `FganB`: `p d − q (d²/4 + d)` with `d` unconstrained;
/// * `FganC`: `p d − q d/(1−d)` with `d < 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "game", rename_all = "snake_case")]
pub enum GameSpec {
    GanLog,
    FganA { gamma: f64 },
    FganB,
    FganC,
}

impl GameSpec {
    /// Closed interval (possibly unbounded) the discriminator output may take.
    pub fn range(&self) -> (f64, f64) {
        match self {
            GameSpec::GanLog => (0.0, 1.0),
            GameSpec::FganA { .. } => (-0.5, 0.5),
            GameSpec::FganB => (f64::NEG_INFINITY, f64::INFINITY),
            GameSpec::FganC => (f64::NEG_INFINITY, 1.0),
        }
    }

    pub fn payoff(&self, p: f64, q: f64, d: f64) -> f64 {
        let xlog = |w: f64, v: f64| if w == 0.0 { 0.0 } else { w * v.log2() };
        match *self {
            GameSpec::GanLog => xlog(p, d) + xlog(q, 1.0 - d),
            GameSpec::FganA { gamma } => p * d - gamma * q * d,
            GameSpec::FganB => p * d - q * (d * d / 4.0 + d),
            GameSpec::FganC => p * d - q * d / (1.0 - d),
        }
    }

    /// Per-point optimum `(value, d*)`. Suprema that are approached but not
    /// attained report the limiting `d*` (possibly infinite).
    pub fn solve_point(&self, p: f64, q: f64) -> (f64, f64) {
        match *self {
            GameSpec::GanLog => {
                if p + q == 0.0 {
                    (0.0, 0.5)
                } else {
                    let d = p / (p + q);
                    (self.payoff(p, q, d), d)
                }
            }
            GameSpec::FganA { gamma } => {
                let g = p - gamma * q;
                (0.5 * g.abs(), 0.5 * g.signum() * (g != 0.0) as i32 as f64)
            }
            GameSpec::FganB => {
                if q == 0.0 {
                    if p == 0.0 {
                        (0.0, 0.0)
                    } else {
                        (f64::INFINITY, f64::INFINITY)
                    }
                } else {
                    ((p - q) * (p - q) / q, 2.0 * (p / q - 1.0))
                }
            }
            GameSpec::FganC => {
                let v = (p.sqrt() - q.sqrt()).powi(2);
                let d = if p == 0.0 {
                    if q == 0.0 {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    1.0 - (q / p).sqrt()
                };
                (v, d)
            }
        }
    }
}

/// Optimal value of the game and the per-point optimal discriminator.
pub fn game_value(p: &Pmf, q: &Pmf, game: &GameSpec) -> Result<(f64, Vec<f64>)> {
    check_alphabets(p, q)?;
    if let GameSpec::FganA { gamma } = game {
        if !gamma.is_finite() || *gamma <= 0.0 {
            return Err(invalid("fgan_a needs a positive finite gamma"));
        }
    }
    let mut value = 0.0;
    let mut d_star = Vec::with_capacity(p.len());
    for (a, b) in p.probs().iter().zip(q.probs()) {
        let (v, d) = game.solve_point(*a, *b);
        value += v;
        d_star.push(d);
    }
    Ok((value, d_star))
}

/// Same as [`game_value`] but each per-point maximum is found by
/// golden-section search over a bracket (expanded outward on unbounded sides).
pub fn game_value_by_search(p: &Pmf, q: &Pmf, game: &GameSpec) -> Result<(f64, Vec<f64>)> {
    check_alphabets(p, q)?;
    let (lo, hi) = game.range();
    let eps = 1e-12;
    let mut value = 0.0;
    let mut d_star = Vec::with_capacity(p.len());
    for (&a, &b) in p.probs().iter().zip(q.probs()) {
        let f = |d: f64| game.payoff(a, b, d);
        let mut l = if lo.is_finite() { lo + if *game == GameSpec::GanLog { eps } else { 0.0 } } else { -1.0 };
        let mut h = if hi.is_finite() { hi - if matches!(game, GameSpec::FganA { .. }) { 0.0 } else { eps } } else { 1.0 };
        if !lo.is_finite() {
            while l > -1e12 && f(l) >= f(0.5 * (l + h)) {
                l *= 2.0;
            }
        }
        if !hi.is_finite() {
            while h < 1e12 && f(h) >= f(0.5 * (l + h)) {
                h *= 2.0;
            }
        }
        let d = golden_section_max(f, l, h, 1e-10);
        value += f(d);
        d_star.push(d);
    }
    Ok((value, d_star))
}

/// Maximiser of a unimodal `f` on `[lo, hi]` to interval width `tol`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    [lo, mid, hi]
        .into_iter()
        .max_by(|x, y| f(*x).partial_cmp(&f(*y)).unwrap_or(std::cmp::Ordering::Less))
        .unwrap_or(mid)
}
