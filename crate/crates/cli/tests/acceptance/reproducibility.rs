use std::path::Path;

use crate::support::{cli, cli_ok, scratch, Report};

fn write_labelled(dir: &Path) -> std::io::Result<()> {
    let (mut three, mut two) = (String::from("x0,x1,label\n"), String::from("x0,x1,label\n"));
    for i in 0..60 {
        let (a, b) = ((i as f64 * 0.37).sin() * 2.0, (i as f64 * 0.91).cos());
        let label = if a + 0.5 * b > 0.3 { if b > 0.0 { 2 } else { 1 } } else { 0 };
        three.push_str(&format!("{a},{b},{label}\n"));
        two.push_str(&format!("{a},{b},{}\n", label.min(1)));
    }
    std::fs::write(dir.join("labelled.csv"), three)?;
    std::fs::write(dir.join("binary.csv"), two)
}

const RUNS: &[(&str, &[&str])] = &[
    ("fit-linreg", &["--data", "line/data.csv"]),
    ("fit-logreg", &["--data", "binary.csv", "--target", "label", "--max-steps", "50", "--seed", "1"]),
    ("fit-multiclass", &["--data", "labelled.csv", "--target", "label", "--max-steps", "50", "--seed", "1"]),
    ("fit-markov", &["--data", "chain/sequences.txt", "--alpha", "0.5"]),
    ("fit-neural-ar", &["--data", "chain/sequences.txt", "--hidden", "8", "--max-steps", "2", "--seed", "2"]),
    ("fit-gmm", &["--data", "sep/data.csv", "--components", "2", "--max-steps", "20", "--seed", "3"]),
    ("fit-ppca", &["--data", "mix/data.csv", "--latent-dim", "1"]),
    ("train-mlp", &["--data", "line/data.csv", "--hidden", "4", "--max-steps", "3", "--seed", "4"]),
    ("train-vae", &["--data", "mix/data.csv", "--max-steps", "3", "--seed", "5"]),
    ("train-diffusion", &["--data", "mix/data.csv", "--timesteps", "10", "--max-steps", "200", "--seed", "6"]),
    ("train-gan", &["--data", "mix/data.csv", "--max-steps", "100", "--seed", "7"]),
    ("train-score", &["--data", "sep/data.csv", "--max-steps", "200", "--seed", "8"]),
];

pub fn replay() -> Report {
    let mut rep = Report::default();
    let (_keep, dir) = scratch();
    let setup = || -> Result<(), String> {
        cli_ok(&dir, &["gen-data", "--kind", "line", "--n", "80", "--noise", "0.3", "--seed", "1", "--out-dir", "line"])?;
        cli_ok(&dir, &["gen-data", "--kind", "markov-chain", "--n", "30", "--length", "20", "--seed", "2", "--out-dir", "chain"])?;
        cli_ok(&dir, &["gen-data", "--kind", "separated-gaussians", "--n", "200", "--seed", "3", "--out-dir", "sep"])?;
        cli_ok(&dir, &["gen-data", "--kind", "mixture2d", "--n", "200", "--seed", "4", "--out-dir", "mix"])?;
        write_labelled(&dir).map_err(|e| e.to_string())
    };
    if let Err(e) = setup() {
        rep.check(false, e);
        return rep;
    }
    let mut ok = Vec::new();
    for (cmd, extra) in RUNS {
        let out = format!("runs/{cmd}");
        let mut args = vec![*cmd];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out-dir", &out]);
        let first = cli(&dir, &args);
        if first.code != 0 {
            rep.check(false, format!("{cmd} exited {}: {}", first.code, first.stderr.trim()));
            continue;
        }
        let manifest = format!("{out}/{cmd}.manifest.json");
        let replay_dir = format!("replays/{cmd}");
        let second = cli(&dir, &["replay", &manifest, "--out-dir", &replay_dir]);
        let same = |f: &str| std::fs::read(dir.join(&out).join(f)).ok() == std::fs::read(dir.join(&replay_dir).join(f)).ok();
        if second.code == 0 && same("metrics.jsonl") && same("model.json") {
            ok.push(*cmd);
        } else {
            rep.check(false, format!("{cmd} replay exited {}: {}", second.code, second.stderr.trim()));
        }
    }
    rep.check(ok.len() == RUNS.len(), format!("{}/{} trainers replay byte-identically", ok.len(), RUNS.len()));
    rep
}
