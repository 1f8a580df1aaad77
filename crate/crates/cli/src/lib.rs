//! Command-line front end: argument parsing, file formats, run manifests and
//! replay. The binary is a thin wrapper around [`main_with`].

pub mod args;
pub mod commands;
pub mod error;
pub mod io;
pub mod manifest;
pub mod models;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;

use args::{Cli, Command};
use commands::{dispatch, Inputs};
use error::CliError;
use io::{read_text, sha256_hex, write_all_atomic};
use manifest::{manifest_name, FileDigest, RunManifest, MANIFEST_SCHEMA};

pub const DEFAULT_OUT_DIR: &str = "genlearn-out";
pub const OUT_ENV: &str = "GENLEARN_OUT";

/// Where a run reads relative paths from and writes to.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub cwd: PathBuf,
    /// Beats both `GENLEARN_OUT` and `--out-dir` (used by replay).
    pub out_override: Option<PathBuf>,
    pub env_out: Option<PathBuf>,
}

impl RunContext {
    pub fn from_env() -> Result<Self, CliError> {
        let cwd = std::env::current_dir().map_err(|e| CliError::Io(e.to_string()))?;
        let env_out = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        Ok(RunContext { cwd, out_override: None, env_out })
    }

    fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        let dir = self
            .out_override
            .clone()
            .or_else(|| self.env_out.clone())
            .or_else(|| flag.map(Path::to_path_buf))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        if dir.is_absolute() {
            dir
        } else {
            self.cwd.join(dir)
        }
    }
}

/// Parses `argv` (without the program name), runs it and returns what to
/// print on stdout.
pub fn run(argv: &[String], ctx: &RunContext) -> Result<String, CliError> {
    let cli = Cli::try_parse_from(std::iter::once("genlearn".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if let Command::Replay(r) = &cli.command {
        return replay(&r.manifest, cli.out_dir.as_deref(), ctx);
    }
    let mut inputs = Inputs::new(ctx.cwd.clone());
    let outcome = dispatch(&cli.command, &mut inputs)?;
    if outcome.files.is_empty() {
        return Ok(outcome.stdout);
    }
    let dir = ctx.out_dir(cli.out_dir.as_deref());
    let mut config = outcome.config.clone();
    if let Some(c) = config.as_mut() {
        c.out_dir = Some(dir.clone());
    }
    let manifest = RunManifest {
        schema: MANIFEST_SCHEMA.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: cli.command.name().into(),
        argv: argv.to_vec(),
        cwd: ctx.cwd.clone(),
        config,
        schemas: outcome.schemas.clone(),
        inputs: inputs.digests,
        outputs: outcome
            .files
            .iter()
            .map(|(name, bytes)| FileDigest { path: name.clone(), sha256: sha256_hex(bytes) })
            .collect(),
    };
    let mut files = outcome.files;
    let mut mbytes = serde_json::to_vec_pretty(&manifest).expect("manifest serialises");
    mbytes.push(b'\n');
    let mname = manifest_name(&manifest.command);
    files.push((mname.clone(), mbytes));
    write_all_atomic(&dir, &files)?;
    let mut out = outcome.stdout;
    out.push_str(&format!("wrote {} files to {}\n", files.len(), dir.display()));
    Ok(out)
}

fn replay(path: &Path, out_flag: Option<&Path>, ctx: &RunContext) -> Result<String, CliError> {
    let mpath = if path.is_absolute() { path.to_path_buf() } else { ctx.cwd.join(path) };
    let manifest: RunManifest = serde_json::from_str(&read_text(&mpath)?)
        .map_err(|e| CliError::Usage(format!("bad manifest {}: {e}", path.display())))?;
    if manifest.schema != MANIFEST_SCHEMA {
        return Err(CliError::Usage(format!("unsupported manifest schema `{}`", manifest.schema)));
    }
    let probe = Inputs::new(manifest.cwd.clone());
    for input in &manifest.inputs {
        let bytes = io::read_bytes(&probe.resolve(Path::new(&input.path)))?;
        if sha256_hex(&bytes) != input.sha256 {
            return Err(CliError::Mismatch(format!("input {} changed since the recorded run", input.path)));
        }
    }
    let out = match out_flag {
        Some(d) if d.is_absolute() => d.to_path_buf(),
        Some(d) => ctx.cwd.join(d),
        None => mpath.parent().unwrap_or(Path::new(".")).join("replay"),
    };
    let inner = RunContext { cwd: manifest.cwd.clone(), out_override: Some(out.clone()), env_out: None };
    if manifest.argv.first().map(String::as_str) == Some("replay") {
        return Err(CliError::Usage("a manifest cannot record a replay".into()));
    }
    run(&manifest.argv, &inner)?;
    let mut mismatched = Vec::new();
    for o in &manifest.outputs {
        let bytes = io::read_bytes(&out.join(&o.path))?;
        if sha256_hex(&bytes) != o.sha256 {
            mismatched.push(o.path.clone());
        }
    }
    if !mismatched.is_empty() {
        return Err(CliError::Mismatch(format!("outputs differ: {}", mismatched.join(", "))));
    }
    Ok(format!("replay of {}: {} outputs byte-identical in {}\n", manifest.command, manifest.outputs.len(), out.display()))
}

/// Runs the process arguments and returns the exit code.
pub fn main_with(args: impl IntoIterator<Item = OsString>) -> i32 {
    let argv: Vec<String> = args.into_iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match Cli::try_parse_from(std::iter::once("genlearn".to_string()).chain(argv.iter().cloned())) {
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{e}");
            return 2;
        }
        Ok(_) => {}
    }
    let result = RunContext::from_env().and_then(|ctx| run(&argv, &ctx));
    match result {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
