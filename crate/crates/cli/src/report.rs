//! CSV artifacts and the JSON run summary.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Shortest decimal that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// An in-memory CSV table, written in one go so the file hash is known.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_header(name: &str, header: Vec<String>) -> Self {
        Self { name: name.into(), header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(std::io::Error::other(e));
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))
    }

    pub fn write(&self, dir: &Path) -> Result<Artifact, CliError> {
        let bytes = self.to_bytes()?;
        let file = format!("{}.csv", self.name);
        std::fs::write(dir.join(&file), &bytes)?;
        Ok(Artifact { path: file, sha256: sha256_hex(&bytes), rows: self.rows.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl AssertionOutcome {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub task_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub task: String,
    pub seed: u64,
    pub config_sha256: String,
    pub model_sha256: String,
    pub config: RunConfig,
    pub artifacts: Vec<Artifact>,
    pub results: serde_json::Value,
    pub assertions: Vec<AssertionOutcome>,
    pub passed: bool,
    pub timings: Timings,
}

pub const SUMMARY_FILE: &str = "summary.json";

impl RunReport {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(SUMMARY_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }

    /// Reads a summary from a file or from `summary.json` inside a directory.
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let file = if path.is_dir() { path.join(SUMMARY_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file)
            .map_err(|e| CliError::Schema(format!("cannot read {}: {e}", file.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", file.display())))
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let status = if self.passed { "PASS" } else { "FAIL" };
        s.push_str(&format!("task {} (thomas-lab {}), seed {}: {status}\n", self.task, self.version, self.seed));
        s.push_str(&format!("config sha256 {}\nmodel  sha256 {}\n", self.config_sha256, self.model_sha256));
        s.push_str(&format!("time {:.3}s (task {:.3}s)\n", self.timings.total_seconds, self.timings.task_seconds));
        if !self.assertions.is_empty() {
            s.push_str("assertions:\n");
            for a in &self.assertions {
                let mark = if a.passed { "pass" } else { "FAIL" };
                s.push_str(&format!("  [{mark}] {}: {}\n", a.name, a.detail));
            }
        }
        s.push_str("artifacts:\n");
        for a in &self.artifacts {
            s.push_str(&format!("  {} ({} rows) {}\n", a.path, a.rows, a.sha256));
        }
        s.push_str("results:\n");
        let pretty = serde_json::to_string_pretty(&self.results).unwrap_or_default();
        for line in pretty.lines() {
            s.push_str("  ");
            s.push_str(line);
            s.push('\n');
        }
        s
    }
}
