use genlearn::diffusion::*;
use genlearn::neuralnet::Activation;
use genlearn::numcore::Rng;

use crate::support::{cli_ok, range, read_csv, read_jsonl, scratch, Report};

fn random_schedule(rng: &mut Rng, steps: usize) -> DiffusionSchedule {
    DiffusionSchedule::from_betas((0..steps).map(|_| rng.uniform_range(0.01, 0.6)).collect()).unwrap()
}

pub fn identities() -> Report {
    let mut rep = Report::default();
    let mut rng = Rng::new(109);
    let mut exact = true;
    for _ in 0..50 {
        let steps = 2 + rng.below(60);
        let s = random_schedule(&mut rng, steps);
        exact &= (2..=steps).all(|t| s.posterior_variance(t) == s.beta_prime(t));
    }
    rep.check(exact, "σ_t² = β′_t bit-for-bit on 50 schedules");

    let mut cond: f64 = 0.0;
    for _ in 0..200 {
        let steps = 2 + rng.below(20);
        let s = random_schedule(&mut rng, steps);
        let t = 2 + rng.below(steps - 1);
        let k = 1 + rng.below(3);
        let (x, z) = (rng.normal_vec(k), rng.normal_vec(k));
        let p = backward_posterior(&s, &x, &z, t).unwrap();
        let (ap, b) = (s.alpha(t - 1), s.beta(t));
        let v_prev = 1.0 - ap;
        let v_t = (1.0 - b) * v_prev + b;
        let cov = (1.0 - b).sqrt() * v_prev;
        for c in 0..k {
            let m_prev = ap.sqrt() * x[c];
            cond = cond.max((p.mean[c] - (m_prev + cov / v_t * (z[c] - (1.0 - b).sqrt() * m_prev))).abs());
        }
        cond = cond.max((p.variance - (v_prev - cov * cov / v_t)).abs());
    }
    rep.check(cond <= 1e-10, format!("backward posterior vs Gaussian conditioning {cond:.1e} (200 instances)"));

    let s = make_schedule(50, BetaSpec::Linear { lo: 1e-4, hi: 0.05 }).unwrap();
    let arch = DenoiserArch { hidden: vec![8], activation: Activation::Logistic, mode: PredictionMode::Noise };
    let mut map: f64 = 0.0;
    for _ in 0..50 {
        let net = DenoiserNet::init(&mut rng, 2, &arch).unwrap();
        let view = MeanView(&net);
        let (x, w) = (rng.normal_vec(2), rng.normal_vec(2));
        let t = 1 + rng.below(50);
        let noise = denoising_objective(&net, &s, &x, t, &w, NoiseWeighting::Unweighted).unwrap();
        let mean = denoising_objective(&view, &s, &x, t, &w, NoiseWeighting::Unweighted).unwrap();
        let (a, b) = (s.alpha(t), s.beta(t));
        map = map.max((mean - b * b / ((1.0 - a) * (1.0 - b)) * noise).abs() / mean.max(1.0));
        for wt in [NoiseWeighting::ForwardVariance, NoiseWeighting::PosteriorVariance] {
            let n = denoising_objective(&net, &s, &x, t, &w, wt).unwrap();
            let m = denoising_objective(&view, &s, &x, t, &w, wt).unwrap();
            map = map.max((n - m).abs() / m.max(1.0));
        }
    }
    rep.check(map <= 1e-10, format!("mean-mode vs noise-mode under the reparameterisation {map:.1e}"));

    let probe = make_schedule(10, BetaSpec::Linear { lo: 0.01, hi: 0.2 }).unwrap();
    let x = vec![0.5, -1.0];
    let noise = draw_probe_noise(&probe, 2, 64, &mut rng);
    let arch = DenoiserArch { hidden: vec![6], activation: Activation::Logistic, mode: PredictionMode::Mean };
    let (mut literal, mut corrected) = (Vec::new(), Vec::new());
    for _ in 0..5 {
        let net = DenoiserNet::init(&mut rng, 2, &arch).unwrap();
        literal.push(elbo_score_gap(&net, &probe, &x, &noise, ScoreBridge::Literal).unwrap());
        corrected.push(elbo_score_gap(&net, &probe, &x, &noise, ScoreBridge::Corrected).unwrap());
    }
    rep.check(
        range(&literal) <= 1e-8,
        format!("ELBO minus score-matching loss, literal score inversion: spread {:.3e} across 5 θ", range(&literal)),
    );
    rep.note(format!(
        "with the posterior-consistent score inversion the same difference has spread {:.1e} and max |value| {:.1e}",
        range(&corrected),
        crate::support::max_abs(corrected.iter().copied())
    ));
    rep
}

pub fn smoke() -> Report {
    let mut rep = Report::default();
    let (_keep, dir) = scratch();
    let run = || -> Result<Vec<(bool, usize, usize)>, String> {
        cli_ok(&dir, &["gen-data", "--kind", "mixture2d", "--n", "2000", "--seed", "5", "--out-dir", "data"])?;
        let mut seeds = Vec::new();
        for seed in 1..=3u64 {
            let out = format!("run{seed}");
            let s = seed.to_string();
            cli_ok(&dir, &["train-diffusion", "--data", "data/data.csv", "--seed", &s, "--out-dir", &out])?;
            let losses: Vec<f64> = read_jsonl(&dir.join(&out).join("metrics.jsonl"))?
                .iter()
                .map(|r| r["loss_nats"].as_f64().ok_or("loss_nats missing"))
                .collect::<Result<_, _>>()?;
            let ma = |a: usize| losses[a..a + 100].iter().sum::<f64>() / 100.0;
            let decreasing = losses.len() >= 200 && ma(losses.len() - 100) < ma(0);
            let model = format!("{out}/model.json");
            let sdir = format!("{out}/samples");
            let ss = (seed + 100).to_string();
            cli_ok(&dir, &["sample", "--model", &model, "--n", "1000", "--seed", &ss, "--out-dir", &sdir])?;
            let gen = read_csv(&dir.join(&sdir).join("samples.csv"))?;
            let near = |m: f64| (0..gen.rows()).filter(|&r| ((gen[(r, 0)] - m).powi(2) + (gen[(r, 1)] - m).powi(2)).sqrt() < 1.5).count();
            seeds.push((decreasing, near(2.0), near(-2.0)));
        }
        Ok(seeds)
    };
    match run() {
        Ok(seeds) => {
            let passes = seeds.iter().filter(|(d, a, b)| *d && *a >= 100 && *b >= 100).count();
            let detail: Vec<String> =
                seeds.iter().map(|(d, a, b)| format!("{}/{a}/{b}", if *d { "↓" } else { "↑" })).collect();
            rep.check(passes >= 2, format!("{passes}/3 seeds pass (loss trend/near (2,2)/near (−2,−2): {})", detail.join(", ")));
        }
        Err(e) => rep.check(false, e),
    }
    rep
}
