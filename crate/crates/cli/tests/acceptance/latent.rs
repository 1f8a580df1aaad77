use std::f64::consts::PI;

use genlearn::divergence::Pmf;
use genlearn::elbo_vae::{elbo_tractable, gaussian_kl_std};
use genlearn::latent::*;
use genlearn::numcore::{quad_1d, DenseMatrix, Rng};
use genlearn::ExperimentConfig;

use crate::oracles::{ppca_ascent, ppca_dataset, ppca_loglik_dense, random_orthogonal, random_spd};
use crate::support::Report;

pub fn ppca() -> Report {
    let mut rep = Report::default();
    let mut rng = Rng::new(106);
    let (mut shortfall, mut dense_gap, mut rot): (f64, f64, f64) = (f64::NEG_INFINITY, 0.0, 0.0);
    for _ in 0..10 {
        let ds = ppca_dataset(&mut rng, 300, 5, 2);
        let p = ppca_fit(&ds, 2).unwrap();
        let closed = ppca_loglik(&p, &ds).unwrap();
        dense_gap = dense_gap.max((closed - ppca_loglik_dense(&p.w, &p.mean, p.noise_variance, &ds)).abs() / closed.abs());
        let best = ppca_ascent(&ds, 2, 10, 2000, &mut rng);
        shortfall = shortfall.max(best - closed);
        let r = random_orthogonal(&mut rng, 2);
        let rotated = PpcaParams { w: p.w.matmul(&r), ..p.clone() };
        rot = rot.max((ppca_loglik(&rotated, &ds).unwrap() - closed).abs());
    }
    rep.check(shortfall <= 1e-6, format!("best ascent minus closed form {shortfall:.2e} nats (10 starts, 10 datasets)"));
    rep.check(dense_gap < 1e-8, format!("closed form vs dense Gaussian rel. {dense_gap:.1e}"));
    rep.check(rot <= 1e-9, format!("rotation change {rot:.1e}"));
    rep
}

fn random_gmm(rng: &mut Rng, d: usize, m: usize, spread: f64, floor: f64) -> GmmParams {
    let w: Vec<f64> = (0..d).map(|_| 0.1 + rng.uniform()).collect();
    let means = (0..d).map(|_| rng.normal_vec(m).iter().map(|v| spread * v).collect()).collect();
    let covs = (0..d).map(|_| random_spd(rng, m, floor)).collect();
    GmmParams::new(Pmf::from_weights(&w).unwrap(), means, covs).unwrap()
}

pub fn em() -> Report {
    let mut rep = Report::default();
    let mut rng = Rng::new(107);
    let truth = random_gmm(&mut rng, 3, 2, 3.0, 0.2);
    let ds = truth.sample(&mut rng, 300);
    let mut drop: f64 = f64::NEG_INFINITY;
    for seed in 0..20 {
        let mut st = EmState::new(em_init(&ds, 3, &mut Rng::new(seed)).unwrap(), &ds).unwrap();
        for _ in 0..100 {
            st = em_step(&st, &ds).unwrap();
        }
        for w in st.trace.windows(2) {
            drop = drop.max(w[0] - w[1]);
        }
    }
    rep.check(drop <= 1e-9, format!("largest log-likelihood decrease {drop:.1e} (20 seeds × 100 steps)"));
    let data = DenseMatrix::from_fn(400, 1, |r, _| if r % 2 == 0 { -5.0 } else { 5.0 } + rng.normal());
    let st = em_fit(&data, 2, &ExperimentConfig::new(3).with_max_steps(500)).unwrap();
    let mut comps: Vec<(f64, f64)> = (0..2).map(|j| (st.params.means()[j][0], st.params.weights().probs()[j])).collect();
    comps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mean_err = (comps[0].0 + 5.0).abs().max((comps[1].0 - 5.0).abs());
    let weight_err = comps.iter().map(|(_, w)| (w - 0.5).abs()).fold(0.0, f64::max);
    rep.check(mean_err < 0.2, format!("mean error {mean_err:.3}"));
    rep.check(weight_err < 0.05, format!("weight error {weight_err:.3}"));
    rep
}

pub fn elbo() -> Report {
    let mut rep = Report::default();
    let mut rng = Rng::new(108);
    let (mut gap_err, mut exact): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let (d, m) = (1 + rng.below(4), 1 + rng.below(3));
        let g = random_gmm(&mut rng, d, m, 2.0, 0.3);
        let x = rng.normal_vec(m);
        let w: Vec<f64> = (0..d).map(|_| rng.uniform()).collect();
        let q = Pmf::from_weights(&w).unwrap();
        let post = gmm_posterior(&g, &x).unwrap();
        let direct: f64 =
            q.probs().iter().zip(post.probs()).map(|(a, b)| if *a > 0.0 { a * (a / b).ln() } else { 0.0 }).sum();
        gap_err = gap_err.max((elbo_tractable(&g, &x, &q).unwrap().gap.unwrap() - direct).abs());
        exact = exact.max(elbo_tractable(&g, &x, &post).unwrap().gap.unwrap().abs());
    }
    rep.check(gap_err <= 1e-10, format!("gap vs D(g‖posterior) {gap_err:.1e} (200 instances)"));
    rep.check(exact <= 1e-10, format!("gap at exact posterior {exact:.1e}"));
    let mut kl_err: f64 = 0.0;
    for _ in 0..50 {
        let mu = rng.uniform_range(-3.0, 3.0);
        let v = rng.uniform_range(0.05, 4.0);
        let sd = v.sqrt();
        let f = |z: f64| {
            let lg = -0.5 * (z - mu).powi(2) / v - 0.5 * (2.0 * PI * v).ln();
            let lp = -0.5 * z * z - 0.5 * (2.0 * PI).ln();
            lg.exp() * (lg - lp)
        };
        let q = quad_1d(f, mu - 14.0 * sd, mu + 14.0 * sd, 20000).unwrap();
        kl_err = kl_err.max((gaussian_kl_std(&[mu], &[v]).unwrap() - q).abs());
    }
    rep.check(kl_err < 1e-7, format!("Gaussian KL vs quadrature {kl_err:.1e} (50 pairs)"));
    rep
}
