use std::f64::consts::LN_2;

use genlearn::divergence::*;
use genlearn::gan::optimal_discriminator_check;
use genlearn::numcore::Rng;

use crate::support::{kl_bits_direct, random_channel, random_pmf, Report};

pub fn f_divergence_battery() -> Report {
    let mut rep = Report::default();
    let mut rng = Rng::new(103);
    let specs = FDivSpec::named();
    let (mut neg, mut self_d, mut dpi): (f64, f64, f64) = (0.0, 0.0, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let n = 2 + rng.below(6);
        let m = 1 + rng.below(5);
        let p = random_pmf(&mut rng, n, true);
        let q = random_pmf(&mut rng, n, true);
        let ch = random_channel(&mut rng, n, m);
        let (py, qy) = data_processed(&p, &q, &ch).unwrap();
        for spec in &specs {
            let d = f_divergence(&p, &q, spec).unwrap();
            neg = neg.min(d);
            self_d = self_d.max(f_divergence(&p, &p, spec).unwrap().abs());
            let after = f_divergence(&py, &qy, spec).unwrap();
            if d.is_finite() {
                dpi = dpi.max(after - d);
            } else if after.is_infinite() {
                dpi = dpi.max(0.0);
            }
        }
    }
    rep.check(neg >= -1e-10, format!("min D_f {neg:.2e}"));
    rep.check(self_d <= 1e-10, format!("max |D_f(p‖p)| {self_d:.2e}"));
    rep.check(dpi <= 1e-10, format!("max DPI excess {dpi:.2e} ({} specs × 1000 triples)", specs.len()));
    let p = Pmf::new(vec![0.5, 0.5]).unwrap();
    let q = Pmf::new(vec![0.25, 0.75]).unwrap();
    let kl = f_divergence(&p, &q, &FDivSpec::kl()).unwrap();
    rep.check((kl - 0.207518).abs() <= 1e-6, format!("KL = {kl:.9} bits"));
    let direct = kl_bits_direct(p.probs(), q.probs());
    rep.check((kl - direct).abs() <= 1e-12, format!("KL vs direct sum {:.1e}", (kl - direct).abs()));
    let chi = f_divergence(&p, &q, &FDivSpec::chi_sq()).unwrap();
    rep.check((chi - 1.0 / 3.0).abs() <= 1e-12, format!("χ² = {chi:.15}"));
    rep
}

pub fn metric_and_bounds() -> Report {
    let mut rep = Report::default();
    let mut rng = Rng::new(104);
    let mut tri = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let n = 2 + rng.below(6);
        let (p, q, r) = (random_pmf(&mut rng, n, true), random_pmf(&mut rng, n, true), random_pmf(&mut rng, n, true));
        let d = |a: &Pmf, b: &Pmf| js_divergence(a, b).unwrap().max(0.0).sqrt();
        tri = tri.max(d(&p, &r) - d(&p, &q) - d(&q, &r));
    }
    rep.check(tri <= 1e-10, format!("√JS triangle excess {tri:.2e}"));
    let (mut sandwich, mut kl_lb) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let n = 2 + rng.below(6);
        let (p, q) = (random_pmf(&mut rng, n, true), random_pmf(&mut rng, n, true));
        let h = hellinger(&p, &q).unwrap();
        let tv: f64 = 0.5 * p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        sandwich = sandwich.max(h * h - tv).max(tv - 2f64.sqrt() * h);
        let kl = kl_divergence(&p, &q).unwrap();
        kl_lb = kl_lb.max(2.0 / LN_2 * h * h - kl);
    }
    rep.check(sandwich <= 1e-12, format!("Hellinger sandwich excess {sandwich:.2e}"));
    rep.check(kl_lb <= 1e-12, format!("KL ≥ (2/ln2)H² excess {kl_lb:.2e}"));
    let mut renyi: f64 = 0.0;
    for _ in 0..1000 {
        let n = 2 + rng.below(6);
        let (p, q) = (random_pmf(&mut rng, n, false), random_pmf(&mut rng, n, false));
        for alpha in [0.5, 2.0, 5.0] {
            let s: f64 = p.probs().iter().zip(q.probs()).map(|(a, b)| a.powf(alpha) * b.powf(1.0 - alpha)).sum();
            let fa = f_divergence(&p, &q, &FDivSpec::renyi_gen(alpha).unwrap()).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
            renyi = renyi.max(rel(fa, (s - 1.0) / (alpha - 1.0)));
            let d = renyi_divergence(&p, &q, alpha).unwrap();
            renyi = renyi.max(rel(d, (1.0 + (alpha - 1.0) * fa).log2() / (alpha - 1.0)));
            renyi = renyi.max(rel(d, s.log2() / (alpha - 1.0)));
        }
    }
    rep.check(renyi <= 1e-10, format!("Rényi ↔ f_α max rel. error {renyi:.2e} at α ∈ {{0.5, 2, 5}}"));
    rep
}

pub fn gan_optimum() -> Report {
    let mut rep = Report::default();
    let mut rng = Rng::new(105);
    let (mut resid, mut grid_excess, mut form, mut dstar): (f64, f64, f64, f64) = (0.0, f64::NEG_INFINITY, 0.0, 0.0);
    for _ in 0..200 {
        let n = 2 + rng.below(8);
        let (p, q) = (random_pmf(&mut rng, n, false), random_pmf(&mut rng, n, false));
        let r = optimal_discriminator_check(&p, &q).unwrap();
        for ((a, b), d) in p.probs().iter().zip(q.probs()).zip(&r.d_star) {
            dstar = dstar.max((d - a / (a + b)).abs());
        }
        resid = resid.max(r.stationarity_residual);
        let grid: f64 = p
            .probs()
            .iter()
            .zip(q.probs())
            .map(|(a, b)| {
                (1..10000).map(|i| GameSpec::GanLog.payoff(*a, *b, i as f64 / 10000.0)).fold(f64::NEG_INFINITY, f64::max)
            })
            .sum();
        grid_excess = grid_excess.max(grid - r.value);
        let m: Vec<f64> = p.probs().iter().zip(q.probs()).map(|(a, b)| 0.5 * (a + b)).collect();
        let direct = kl_bits_direct(p.probs(), &m) + kl_bits_direct(q.probs(), &m) - 2.0;
        form = form.max((r.value - direct).abs());
    }
    rep.check(dstar <= 1e-15, format!("d* = p/(p+q) max error {dstar:.1e}"));
    rep.check(resid < 1e-10, format!("stationarity residual {resid:.2e}"));
    rep.check(grid_excess <= 1e-6, format!("grid search excess {grid_excess:.2e}"));
    rep.check(form <= 1e-10, format!("value vs D(p‖m)+D(q‖m)−2 {form:.2e}"));
    rep.note("in bits the value is 2·JS(p, q) − 2");
    rep
}
