use genlearn::numcore::{quad_1d, DenseMatrix, Rng};
use genlearn::score::*;
use genlearn::ExperimentConfig;

use crate::support::Report;

fn bayes_posterior_mean(prior: &dyn Fn(f64) -> f64, lo: f64, hi: f64, y: f64, v: f64) -> f64 {
    let like = |x: f64| (-(y - x).powi(2) / (2.0 * v)).exp();
    let num = quad_1d(|x| x * prior(x) * like(x), lo, hi, 20000).unwrap();
    let den = quad_1d(|x| prior(x) * like(x), lo, hi, 20000).unwrap();
    num / den
}

fn random_mixture(rng: &mut Rng, comps: usize) -> MixtureDensity {
    let w: Vec<f64> = (0..comps).map(|_| rng.uniform() + 0.1).collect();
    let s: f64 = w.iter().sum();
    MixtureDensity::new(
        w.iter().map(|v| v / s).collect(),
        (0..comps).map(|_| vec![rng.uniform_range(-3.0, 3.0)]).collect(),
        (0..comps).map(|_| rng.uniform_range(0.2, 2.0)).collect(),
    )
    .unwrap()
}

pub fn tweedie() -> Report {
    let mut rep = Report::default();
    let mut rng = Rng::new(111);
    let (mut shrink, mut gauss_q): (f64, f64) = (0.0, 0.0);
    let (mu0, s0, v) = (0.7, 1.3, 0.4);
    let prior = GaussianDensity::new(vec![mu0], s0).unwrap();
    let fy = prior.smoothed(v).unwrap();
    let pdf = |x: f64| prior.log_density(&[x]).exp();
    for _ in 0..20 {
        let y = rng.uniform_range(-5.0, 5.0);
        let t = tweedie_estimate(&fy, &[y], v).unwrap()[0];
        shrink = shrink.max((t - (mu0 + s0 / (s0 + v) * (y - mu0))).abs());
        gauss_q = gauss_q.max((t - bayes_posterior_mean(&pdf, -20.0, 20.0, y, v)).abs());
    }
    rep.check(shrink <= 1e-10, format!("Gaussian prior vs shrinkage formula {shrink:.1e}"));
    rep.check(gauss_q < 1e-4, format!("Gaussian prior vs quadrature {gauss_q:.1e}"));

    let fy = MixtureDensity::new(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], vec![1.0, 1.0]).unwrap();
    let mut two: f64 = 0.0;
    for i in 0..20 {
        let y = -4.0 + 8.0 * i as f64 / 19.0;
        let (a, b) = ((-(y + 1.0f64).powi(2) / 2.0).exp(), (-(y - 1.0f64).powi(2) / 2.0).exp());
        two = two.max((tweedie_estimate(&fy, &[y], 1.0).unwrap()[0] - (b - a) / (a + b)).abs());
    }
    rep.check(two < 1e-4, format!("two-point prior vs Bayes {two:.1e}"));

    let mut mix: f64 = 0.0;
    for _ in 0..10 {
        let comps = 1 + rng.below(3);
        let prior = random_mixture(&mut rng, comps);
        let v = rng.uniform_range(0.1, 2.0);
        let fy = prior.smoothed(v).unwrap();
        let pdf = |x: f64| prior.log_density(&[x]).exp();
        for _ in 0..20 {
            let y = rng.uniform_range(-5.0, 5.0);
            mix = mix.max((tweedie_estimate(&fy, &[y], v).unwrap()[0] - bayes_posterior_mean(&pdf, -20.0, 20.0, y, v)).abs());
        }
    }
    rep.check(mix < 1e-4, format!("10 mixture priors vs quadrature {mix:.1e}"));
    rep
}

pub fn dsm() -> Report {
    let mut rep = Report::default();
    let mut rng = Rng::new(112);
    let (s0, v) = (1.0, 0.25);
    let half: Vec<f64> = (0..50_000).map(|_| rng.normal()).collect();
    let raw: Vec<f64> = half.iter().copied().chain(half.iter().map(|x| -x)).collect();
    let m2 = raw.iter().map(|x| x * x).sum::<f64>() / raw.len() as f64;
    let x = DenseMatrix::new(raw.len(), 1, raw.iter().map(|x| x * s0 / m2.sqrt()).collect()).unwrap();
    let noise = DenseMatrix::from_fn(20_000_000, 1, |_, _| rng.normal());
    let a = dsm_linear_fit(&x, &noise, v).unwrap();
    let target = -1.0 / (s0 * s0 + v);
    rep.check((a - target).abs() < 1e-3, format!("linear-family slope {a:.5} vs {target:.5}"));

    let ds = DenseMatrix::from_fn(10_000, 1, |_, _| 3.0 + rng.normal());
    let cfg = ExperimentConfig::new(1).with_learning_rate(0.02).with_max_steps(20_000).with_batch_size(256).with_mc_samples(2);
    let (m, _) = dsm_train(&ds, v, &ScoreArch::default(), &cfg).unwrap();
    let worst = [1.0, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0]
        .iter()
        .map(|y| (m.score(&[*y]).unwrap()[0] + (y - 3.0) / 1.25).abs())
        .fold(0.0, f64::max);
    rep.check(worst < 0.1, format!("trained score max error {worst:.3} on y ∈ [1, 5] (N(3,1), σ² = 0.25)"));
    rep
}
