use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::HarnessError;

pub const MANIFEST_FILE: &str = "manifest.toml";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    /// `name/vN`; bumped whenever the column set changes.
    pub schema: String,
    pub rows: usize,
    pub sha256: String,
}

/// A `(cell, seed)` that errored or panicked; its siblings still ran.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub code_version: String,
    /// SHA-256 of the canonical TOML form of the configuration.
    pub config_hash: String,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub outputs: Vec<OutputEntry>,
    pub failures: Vec<CellFailure>,
    /// The configuration as run.
    pub config: String,
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self::for_command(cfg.kind.label(), cfg.to_toml(), cfg.seed, cfg.seeds.clone())
    }

    /// Manifest for a run that is not one of the experiment kinds; `config`
    /// is whatever text fully describes it.
    pub fn for_command(kind: &str, config: String, master_seed: u64, seeds: Vec<u64>) -> Self {
        Self {
            kind: kind.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: sha256_hex(config.as_bytes()),
            master_seed,
            seeds,
            outputs: Vec::new(),
            failures: Vec::new(),
            config,
        }
    }

    /// Records a non-CSV output already written to `dir`.
    pub fn record(&mut self, dir: &Path, file: &str, schema: &str, rows: usize) -> Result<(), HarnessError> {
        let path = dir.join(file);
        let bytes = std::fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
        self.outputs.push(OutputEntry { file: file.into(), schema: schema.into(), rows, sha256: sha256_hex(&bytes) });
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, HarnessError> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_toml()).map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// Outputs whose bytes on disk no longer match the recorded checksum.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|o| std::fs::read(dir.join(&o.file)).map(|b| sha256_hex(&b) != o.sha256).unwrap_or(true))
            .map(|o| o.file.clone())
            .collect()
    }
}

/// In-memory CSV with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub schema: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, schema: &str, header: &[&str]) -> Self {
        Self {
            file: file.to_string(),
            schema: schema.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Writes the table into `dir` and records it in `manifest`.
    pub fn write(&self, dir: &Path, manifest: &mut RunManifest) -> Result<(), HarnessError> {
        let bytes = self.to_bytes()?;
        let path = dir.join(&self.file);
        std::fs::write(&path, &bytes).map_err(|e| HarnessError::io(&path, e))?;
        manifest.outputs.push(OutputEntry {
            file: self.file.clone(),
            schema: self.schema.clone(),
            rows: self.rows.len(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }
}

/// Reads a CSV written by [`Table::write`].
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()?;
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ExperimentKind;

    #[test]
    fn manifest_round_trips_and_verifies() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::new(ExperimentKind::Bounds);
        let mut m = RunManifest::new(&cfg);
        let mut t = Table::new("x.csv", "x/v1", &["a", "b"]);
        t.push(vec!["1".into(), "2".into()]);
        t.write(dir.path(), &mut m).unwrap();
        m.write(dir.path()).unwrap();
        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
        assert!(back.verify(dir.path()).is_empty());
        std::fs::write(dir.path().join("x.csv"), "a,b\n1,3\n").unwrap();
        assert_eq!(back.verify(dir.path()), vec!["x.csv".to_string()]);
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = RunManifest::new(&ExperimentConfig::new(ExperimentKind::Bounds));
        let mut cfg = ExperimentConfig::new(ExperimentKind::Bounds);
        cfg.seed = 7;
        let b = RunManifest::new(&cfg);
        assert_ne!(a.config_hash, b.config_hash);
        assert_eq!(a.config_hash.len(), 64);
    }
}
