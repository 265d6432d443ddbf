//! CSV and manifest writing.
//!
//! Floats are written in scientific notation with 17 significant digits,
//! which round-trips every `f64` bit-exactly and keeps column widths
//! stable for diffing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::config::ScenarioConfig;

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Column-oriented CSV table.
#[derive(Debug, Clone, Default)]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.headers.len());
        self.rows.push(values.iter().map(|v| format_float(*v)).collect());
    }

    /// Row with a leading text cell.
    pub fn push_labeled(&mut self, label: &str, values: &[f64]) {
        let mut row = vec![label.to_string()];
        row.extend(values.iter().map(|v| format_float(*v)));
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.headers.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Parsed numeric CSV with a header row.
#[derive(Debug, Clone)]
pub struct CsvData {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub source: String,
}

impl CsvData {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let headers: Vec<String> = lines
            .next()
            .unwrap_or_default()
            .split(',')
            .map(str::to_string)
            .collect();
        let rows = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split(',')
                    .map(|c| {
                        c.parse::<f64>()
                            .map_err(|_| Error::Config(format!("bad number `{c}` in {}", path.display())))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            headers,
            rows,
            source: path.display().to_string(),
        })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
                file: self.source.clone(),
            })?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Collects files written into one run directory.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `contents` to `rel` (relative to the run directory) and
    /// records its checksum.
    pub fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.files.push(FileEntry {
            path: rel.to_string(),
            bytes: contents.len() as u64,
            sha256: hex(&Sha256::digest(contents)),
        });
        Ok(())
    }

    pub fn write_table(&mut self, rel: &str, table: &Table) -> Result<()> {
        self.write(rel, table.to_csv().as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    /// Writes `manifest.json` (not itself listed in the inventory).
    pub fn finish(self, manifest: &RunManifest) -> Result<()> {
        let mut text = serde_json::to_string_pretty(manifest)?;
        text.push('\n');
        fs::write(self.root.join(MANIFEST), text)?;
        Ok(())
    }
}

pub const MANIFEST: &str = "manifest.json";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: ScenarioConfig,
    /// `max_t |q(t) − q(0)|` per monitored quantity.
    pub drift: BTreeMap<String, f64>,
    pub files: Vec<FileEntry>,
    /// The only field that varies between identical runs.
    pub wall_time_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: ScenarioConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            drift: BTreeMap::new(),
            files: Vec::new(),
            wall_time_seconds: 0.0,
        }
    }
}

/// Tracks `max |q(t) − q(0)|` for named quantities.
#[derive(Debug, Default)]
pub struct DriftTracker {
    initial: BTreeMap<String, f64>,
    worst: BTreeMap<String, f64>,
}

impl DriftTracker {
    pub fn observe(&mut self, name: &str, value: f64) {
        let q0 = *self.initial.entry(name.to_string()).or_insert(value);
        let w = self.worst.entry(name.to_string()).or_insert(0.0);
        *w = w.max((value - q0).abs());
    }

    pub fn into_summary(self) -> BTreeMap<String, f64> {
        self.worst
    }
}
