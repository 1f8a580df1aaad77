use std::io::Write;
use std::path::{Path, PathBuf};

use genlearn::numcore::DenseMatrix;
use genlearn::regression::LabeledDataset;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    String::from_utf8(read_bytes(path)?).map_err(|_| CliError::Usage(format!("{} is not UTF-8", path.display())))
}

/// Writes every file through a temporary in the target directory, then the
/// rename. Nothing is created before all contents exist in memory.
pub fn write_all_atomic(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::Io(e.to_string()))?;
        tmp.write_all(bytes).map_err(|e| CliError::Io(e.to_string()))?;
        tmp.as_file().sync_all().map_err(|e| CliError::Io(e.to_string()))?;
        staged.push((tmp, dir.join(name)));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, path) in staged {
        tmp.persist(&path).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}

/// A numeric CSV with a header row.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub values: DenseMatrix,
}

impl Table {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let bad = |msg: String| CliError::Usage(format!("{}: {msg}", origin.display()));
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let columns: Vec<String> = rdr.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
        if columns.is_empty() || columns.iter().any(|c| c.is_empty()) {
            return Err(bad("missing or empty header".into()));
        }
        let mut data = Vec::new();
        let mut rows = 0;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            for field in rec.iter() {
                let v: f64 = field.parse().map_err(|_| bad(format!("row {}: `{field}` is not a number", i + 1)))?;
                if !v.is_finite() {
                    return Err(bad(format!("row {}: non-finite value", i + 1)));
                }
                data.push(v);
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(bad("no data rows".into()));
        }
        let values = DenseMatrix::new(rows, columns.len(), data).map_err(|e| bad(e.to_string()))?;
        Ok(Table { columns, values })
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in 0..self.values.rows() {
            w.write_record(self.values.row(r).iter().map(|v| v.to_string())).expect("in-memory write");
        }
        w.into_inner().expect("in-memory write")
    }

    pub fn from_matrix(values: DenseMatrix) -> Self {
        let columns = (0..values.cols()).map(|c| format!("x{c}")).collect();
        Table { columns, values }
    }

    fn target_index(&self, target: &str) -> Result<usize, CliError> {
        self.columns
            .iter()
            .position(|c| c == target)
            .ok_or_else(|| CliError::Usage(format!("no column named `{target}`")))
    }

    /// Every column except `target`, plus the target column itself.
    pub fn split(&self, target: &str) -> Result<(DenseMatrix, Vec<f64>), CliError> {
        let t = self.target_index(target)?;
        let keep: Vec<usize> = (0..self.columns.len()).filter(|c| *c != t).collect();
        let x = DenseMatrix::from_fn(self.values.rows(), keep.len(), |r, c| self.values[(r, keep[c])]);
        Ok((x, self.values.column(t)))
    }

    pub fn regression(&self, target: &str) -> Result<LabeledDataset, CliError> {
        let (x, y) = self.split(target)?;
        Ok(LabeledDataset::regression(x, y)?)
    }

    pub fn classification(&self, target: &str, classes: Option<usize>) -> Result<LabeledDataset, CliError> {
        let (x, y) = self.split(target)?;
        let labels = y
            .iter()
            .map(|v| {
                if *v >= 0.0 && v.fract() == 0.0 {
                    Ok(*v as usize)
                } else {
                    Err(CliError::Usage(format!("class label {v} is not a non-negative integer")))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let m = classes.unwrap_or_else(|| labels.iter().max().map_or(1, |l| l + 1));
        Ok(LabeledDataset::classification(x, labels, m)?)
    }
}

pub fn jsonl<T: serde::Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("metric records serialise");
        out.push(b'\n');
    }
    out
}
