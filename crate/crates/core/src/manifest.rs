//! Run manifests: each CLI invocation atomically writes its tables under a
//! run directory and records every emitted file with a checksum, the config
//! snapshot and hash, the seed, and timestamps.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::{hex_string, RunConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct EmittedFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub version: u32,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub files: Vec<EmittedFile>,
    pub metrics: BTreeMap<String, f64>,
    pub config: serde_json::Value,
}

/// Output directory handle that tracks emitted files and their checksums.
pub struct RunDir {
    root: PathBuf,
    files: Vec<EmittedFile>,
    metrics: BTreeMap<String, f64>,
    started_unix_s: u64,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunDir {
    /// Resolve the output directory: explicit flag, then the DGLAB_OUT
    /// environment variable, then ./runs/<timestamp>-<hash8>.
    pub fn resolve(flag: Option<&Path>, config_hash: &str) -> Result<Self> {
        let root = match flag {
            Some(p) => p.to_path_buf(),
            None => match std::env::var_os("DGLAB_OUT") {
                Some(dir) => PathBuf::from(dir),
                None => PathBuf::from("runs")
                    .join(format!("{}-{}", unix_now(), &config_hash[..8])),
            },
        };
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            files: Vec::new(),
            metrics: BTreeMap::new(),
            started_unix_s: unix_now(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn record_metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    /// Write bytes to `name` atomically (temp file + rename) and record the
    /// checksum.
    pub fn write_file(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let final_path = self.root.join(name);
        let tmp_path = self.root.join(format!("{name}.tmp"));
        std::fs::write(&tmp_path, bytes)?;
        std::fs::rename(&tmp_path, &final_path)?;
        self.files.push(EmittedFile {
            path: name.to_string(),
            sha256: hex_string(&Sha256::digest(bytes)),
        });
        Ok(final_path)
    }

    /// Serialize rows to CSV (header from field names) and emit atomically.
    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        for row in rows {
            w.serialize(row)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Config(format!("csv flush failed: {e}")))?;
        self.write_file(name, &bytes)
    }

    /// Write the manifest and return its path.
    pub fn finish(mut self, command: &str, config: &RunConfig, seed: u64) -> Result<PathBuf> {
        let manifest = RunManifest {
            version: 1,
            command: command.to_string(),
            seed,
            config_hash: config.content_hash(),
            started_unix_s: self.started_unix_s,
            finished_unix_s: unix_now(),
            files: std::mem::take(&mut self.files),
            metrics: std::mem::take(&mut self.metrics),
            config: serde_json::to_value(config)?,
        };
        let bytes = serde_json::to_vec_pretty(&manifest)?;
        let path = self.root.join("manifest.json");
        let tmp = self.root.join("manifest.json.tmp");
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }
}
