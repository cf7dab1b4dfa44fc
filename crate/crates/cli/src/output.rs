//! Output files and the run manifest.

use crate::config::{ExperimentConfig, Format};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub kind: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapIncident {
    pub replication: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arm: Option<String>,
    pub message: String,
}

/// Writes into the output directory and keeps the index for the manifest.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    csv: bool,
    json: bool,
    pub entries: Vec<OutputEntry>,
}

impl Artifacts {
    pub fn new(dir: &Path, formats: &[Format]) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            csv: formats.contains(&Format::Csv),
            json: formats.contains(&Format::Json),
            entries: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn put(&mut self, rel: &str, kind: &str, bytes: Vec<u8>) -> std::io::Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, &bytes)?;
        self.entries.push(OutputEntry {
            path: rel.to_string(),
            kind: kind.to_string(),
            bytes: bytes.len(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn csv<S: Serialize>(&mut self, rel: &str, kind: &str, rows: impl IntoIterator<Item = S>) -> std::io::Result<()> {
        if !self.csv {
            return Ok(());
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row).map_err(std::io::Error::other)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        self.put(rel, kind, bytes)
    }

    pub fn json<S: Serialize>(&mut self, rel: &str, kind: &str, value: &S) -> std::io::Result<()> {
        if !self.json {
            return Ok(());
        }
        let mut bytes = serde_json::to_vec_pretty(value).map_err(std::io::Error::other)?;
        bytes.push(b'\n');
        self.put(rel, kind, bytes)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<'a> {
    pub artifact: &'static str,
    pub version: &'static str,
    pub schema: u32,
    pub subcommand: &'a str,
    pub config_hash: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub strict: bool,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub exit_code: i32,
    pub outputs: &'a [OutputEntry],
    pub cap_incidents: &'a [CapIncident],
    pub replay: String,
    pub config: &'a ExperimentConfig,
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest<'_>) -> std::io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(manifest).map_err(std::io::Error::other)?;
    bytes.push(b'\n');
    std::fs::write(dir.join("manifest.json"), bytes)
}
