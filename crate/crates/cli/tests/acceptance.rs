//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

#[path = "acceptance/diffusion.rs"]
mod diffusion;
#[path = "acceptance/divergences.rs"]
mod divergences;
#[path = "acceptance/fit.rs"]
mod fit;
#[path = "acceptance/latent.rs"]
mod latent;
#[path = "acceptance/reproducibility.rs"]
mod reproducibility;
#[path = "acceptance/score.rs"]
mod score;
#[path = "acceptance/sequences.rs"]
mod sequences;
#[path = "acceptance/support.rs"]
mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use support::Report;

type Criterion = (&'static str, fn() -> Report);

const CRITERIA: [Criterion; 14] = [
    ("least squares", fit::least_squares),
    ("gradients", fit::gradients),
    ("f-divergence battery", divergences::f_divergence_battery),
    ("metric and bounds", divergences::metric_and_bounds),
    ("GAN optimum", divergences::gan_optimum),
    ("PPCA", latent::ppca),
    ("EM", latent::em),
    ("ELBO", latent::elbo),
    ("diffusion identities", diffusion::identities),
    ("diffusion smoke", diffusion::smoke),
    ("Tweedie", score::tweedie),
    ("DSM", score::dsm),
    ("autoregressive", sequences::autoregressive),
    ("reproducibility", reproducibility::replay),
];

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<(usize, &Criterion)> = CRITERIA
        .iter()
        .enumerate()
        .filter(|(i, (name, _))| filter.is_empty() || filter.iter().any(|f| name.contains(f.as_str()) || (i + 1).to_string() == *f))
        .collect();
    let results: Vec<(Report, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = selected
            .iter()
            .map(|(_, (_, f))| {
                s.spawn(move || {
                    let start = Instant::now();
                    let rep = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
                        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                        let mut r = Report::default();
                        r.check(false, format!("panicked: {}", msg.unwrap_or_default()));
                        r
                    });
                    (rep, start.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("criterion thread")).collect()
    });
    let mut failed = 0;
    for ((i, (name, _)), (rep, secs)) in selected.iter().zip(&results) {
        let verdict = if rep.passed() { "PASS" } else { "FAIL" };
        failed += usize::from(!rep.passed());
        println!("criterion {:>2} {verdict} {name} ({secs:.1}s): {}", i + 1, rep.summary());
        for n in &rep.notes {
            println!("    note: {n}");
        }
    }
    println!("{} of {} criteria passed", selected.len() - failed, selected.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
