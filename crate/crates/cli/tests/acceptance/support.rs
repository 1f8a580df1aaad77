use std::path::{Path, PathBuf};
use std::process::Command;

use genlearn::divergence::{Channel, Pmf};
use genlearn::numcore::{DenseMatrix, Rng};

/// Checked clauses of one criterion plus informational notes.
#[derive(Default)]
pub struct Report {
    pub clauses: Vec<(bool, String)>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn check(&mut self, ok: bool, text: impl Into<String>) {
        self.clauses.push((ok, text.into()));
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn passed(&self) -> bool {
        !self.clauses.is_empty() && self.clauses.iter().all(|(ok, _)| *ok)
    }

    pub fn summary(&self) -> String {
        self.clauses
            .iter()
            .map(|(ok, t)| if *ok { t.clone() } else { format!("{t} [FAILED]") })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a: f64, b| a.max(b.abs()))
}

pub fn range(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Weights on `n` atoms with occasional exact zeros; never all zero.
pub fn random_pmf(rng: &mut Rng, n: usize, zeros: bool) -> Pmf {
    loop {
        let w: Vec<f64> =
            (0..n).map(|_| if zeros && rng.uniform() < 0.2 { 0.0 } else { rng.uniform_range(0.001, 1.0) }).collect();
        if w.iter().any(|v| *v > 0.0) {
            return Pmf::from_weights(&w).unwrap();
        }
    }
}

pub fn random_channel(rng: &mut Rng, n: usize, m: usize) -> Channel {
    let rows: Vec<f64> = (0..n).flat_map(|_| random_pmf(rng, m, true).probs().to_vec()).collect();
    Channel::new(DenseMatrix::new(n, m, rows).unwrap()).unwrap()
}

pub fn kl_bits_direct(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum::<f64>() / std::f64::consts::LN_2
}

pub struct CliRun {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the built binary in `cwd` with `GENLEARN_OUT` cleared.
pub fn cli(cwd: &Path, args: &[&str]) -> CliRun {
    let out = Command::new(env!("CARGO_BIN_EXE_genlearn"))
        .args(args)
        .current_dir(cwd)
        .env_remove("GENLEARN_OUT")
        .output()
        .expect("binary runs");
    CliRun {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn cli_ok(cwd: &Path, args: &[&str]) -> Result<String, String> {
    let r = cli(cwd, args);
    if r.code == 0 {
        Ok(r.stdout)
    } else {
        Err(format!("`genlearn {}` exited {}: {}", args.join(" "), r.code, r.stderr.trim()))
    }
}

pub fn read_csv(path: &Path) -> Result<DenseMatrix, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        rows.push(rec.iter().map(|f| f.parse::<f64>().map_err(|e| e.to_string())).collect::<Result<Vec<_>, _>>()?);
    }
    DenseMatrix::from_rows(&rows).map_err(|e| e.to_string())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<serde_json::Value>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    text.lines().map(|l| serde_json::from_str(l).map_err(|e| e.to_string())).collect()
}

pub fn scratch() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().to_path_buf();
    (dir, path)
}
