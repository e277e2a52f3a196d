//! Artifact files: CSV tables and JSON documents stamped with a manifest
//! hash, plus the run manifest itself.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Seventeen significant digits: round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Provenance of one CLI invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Parsed arguments, output paths excluded.
    pub arguments: Value,
    /// SHA-256 of each input file read.
    pub input_hashes: Vec<String>,
    pub config: RunConfig,
    pub seed: u64,
    pub outputs: Vec<PathBuf>,
    pub wall_time_s: f64,
    /// SHA-256 of each output file, in `outputs` order.
    pub artifact_hashes: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, arguments: Value, config: RunConfig) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            arguments,
            input_hashes: Vec::new(),
            seed: config.noise.seed,
            config,
            outputs: Vec::new(),
            wall_time_s: 0.0,
            artifact_hashes: Vec::new(),
        }
    }

    /// Hash of the inputs only, so reruns embed the same value.
    pub fn input_hash(&self) -> Result<String> {
        let inputs = serde_json::json!({
            "subcommand": self.subcommand,
            "arguments": self.arguments,
            "inputs": self.input_hashes,
            "config": self.config,
        });
        Ok(sha256_hex(serde_json::to_string(&inputs)?.as_bytes()))
    }

    pub fn record(&mut self, path: &Path, bytes: &[u8]) {
        self.outputs.push(path.to_path_buf());
        self.artifact_hashes.push(sha256_hex(bytes));
    }
}

/// Plain numeric table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self, manifest_hash: &str) -> String {
        let mut out = format!("# manifest {manifest_hash}\n{}\n", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    /// Reads a CSV with a header row; `#` lines are comments.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let columns: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Serialization(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Serialization(e.to_string()))?;
            let row = record
                .iter()
                .map(|cell| {
                    cell.parse::<f64>()
                        .map_err(|_| Error::Serialization(format!("row {}: `{cell}` is not a number", i + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }
}

/// Pretty JSON of `body` with a leading `"manifest"` field.
pub fn stamped_json<T: Serialize>(manifest_hash: &str, body: &T) -> Result<String> {
    let mut doc = serde_json::Map::new();
    doc.insert("manifest".into(), Value::from(manifest_hash));
    match serde_json::to_value(body)? {
        Value::Object(fields) => doc.extend(fields),
        other => {
            doc.insert("data".into(), other);
        }
    }
    Ok(serde_json::to_string_pretty(&Value::Object(doc))? + "\n")
}
