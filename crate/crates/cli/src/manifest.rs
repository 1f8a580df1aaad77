use std::collections::BTreeMap;
use std::path::PathBuf;

use genlearn::ExperimentConfig;
use serde::{Deserialize, Serialize};

pub const MANIFEST_SCHEMA: &str = "genlearn.manifest/1";
pub const METRICS_SCHEMA: &str = "genlearn.metrics/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// What ran, with which settings, on which bytes, producing which bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name.
    pub argv: Vec<String>,
    /// Directory relative input paths were resolved against.
    pub cwd: PathBuf,
    pub config: Option<ExperimentConfig>,
    pub schemas: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
}

pub fn manifest_name(command: &str) -> String {
    format!("{command}.manifest.json")
}
