use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Reads input files and remembers their digests for the manifest.
#[derive(Default)]
pub struct Inputs {
    digests: BTreeMap<String, String>,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.digests.insert(path.display().to_string(), hex);
        Ok(bytes)
    }

    pub fn json<T: DeserializeOwned>(&mut self, path: &Path) -> Result<T, CliError> {
        let bytes = self.read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn json_value(&mut self, path: &Path) -> Result<serde_json::Value, CliError> {
        self.json(path)
    }

    /// Numeric columns of a CSV file with a header row.
    pub fn csv_columns(&mut self, path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
        let bytes = self.read(path)?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut cols = vec![vec![]; header.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            for (k, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    CliError::config(format!("{}: row {}: '{field}' is not a number", path.display(), line + 2))
                })?;
                cols[k].push(v);
            }
        }
        Ok((header, cols))
    }

    /// The single numeric column of a one-column CSV.
    pub fn csv_column(&mut self, path: &Path) -> Result<Vec<f64>, CliError> {
        let (header, mut cols) = self.csv_columns(path)?;
        if header.len() != 1 {
            return Err(CliError::config(format!("{}: expected one column, found {}", path.display(), header.len())));
        }
        Ok(cols.remove(0))
    }

    pub fn digests(&self) -> &BTreeMap<String, String> {
        &self.digests
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("output serializes");
    write_text(path, &(text + "\n"))
}

/// CSV with a header row; values use Rust's shortest round-trip formatting.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory write");
    write_text(path, std::str::from_utf8(&bytes).expect("csv is utf-8"))
}

/// Record of one run, written next to its outputs.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>, inputs: &Inputs, outputs: &[PathBuf], start: Instant) -> Self {
        Self {
            command: command.to_string(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: inputs.digests().clone(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            wall_time_s: start.elapsed().as_secs_f64(),
        }
    }
}

/// `out.json` → `out.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    out.with_file_name(format!("{stem}.manifest.json"))
}
