use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// SHA-256 of a value's canonical JSON.
pub fn json_digest<T: Serialize>(value: &T) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(value)?)))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub sha256: String,
    pub bytes: u64,
}

impl FileRecord {
    pub fn of(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            sha256: file_digest(path)?,
            bytes: meta.len(),
        })
    }
}

/// Everything a run directory was produced from and everything it holds.
/// Stages append; a stage that is re-run replaces its earlier records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub master_seed: u64,
    pub threads: usize,
    pub versions: BTreeMap<String, String>,
    /// Input files keyed by the path they were read from.
    pub inputs: BTreeMap<String, FileRecord>,
    /// Produced files keyed by their path relative to the run directory.
    pub artifacts: BTreeMap<String, FileRecord>,
    pub edge_counts: BTreeMap<String, BTreeMap<String, usize>>,
    pub stages: Vec<String>,
}

impl RunManifest {
    pub fn new<C: Serialize>(config: &C, master_seed: u64, threads: usize) -> Result<Self> {
        let config_hash = json_digest(config)?;
        let mut versions = BTreeMap::new();
        versions.insert(env!("CARGO_PKG_NAME").to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert(
            "checkpoint".into(),
            super::checkpoint::CHECKPOINT_VERSION.to_string(),
        );
        Ok(Self {
            run_id: format!("{}-s{master_seed}", &config_hash[..12]),
            config: serde_json::to_value(config)?,
            config_hash,
            master_seed,
            threads,
            versions,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            edge_counts: BTreeMap::new(),
            stages: Vec::new(),
        })
    }

    pub fn path(run_dir: impl AsRef<Path>) -> PathBuf {
        run_dir.as_ref().join(MANIFEST_FILE)
    }

    pub fn load(run_dir: impl AsRef<Path>) -> Result<Self> {
        let path = Self::path(run_dir);
        let body = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&body)?)
    }

    /// The existing manifest of `run_dir`, or a fresh one when there is none.
    /// An existing manifest from a different configuration is a config error.
    pub fn load_or_new<C: Serialize>(run_dir: impl AsRef<Path>, config: &C, master_seed: u64, threads: usize) -> Result<Self> {
        let fresh = Self::new(config, master_seed, threads)?;
        if !Self::path(&run_dir).exists() {
            return Ok(fresh);
        }
        let old = Self::load(&run_dir)?;
        if old.config_hash != fresh.config_hash || old.master_seed != master_seed {
            return Err(Error::Config(format!(
                "{} belongs to run {}, not {}; use a new output directory",
                Self::path(&run_dir).display(),
                old.run_id,
                fresh.run_id
            )));
        }
        Ok(old)
    }

    /// Inputs inside the run directory are keyed by their relative path.
    pub fn record_input(&mut self, run_dir: impl AsRef<Path>, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let key = path.strip_prefix(run_dir.as_ref()).unwrap_or(path);
        self.inputs.insert(rel_key(key), FileRecord::of(path)?);
        Ok(())
    }

    pub fn record_artifact(&mut self, run_dir: impl AsRef<Path>, rel: impl AsRef<Path>) -> Result<()> {
        let rel = rel.as_ref();
        let record = FileRecord::of(run_dir.as_ref().join(rel))?;
        self.artifacts.insert(rel_key(rel), record);
        Ok(())
    }

    pub fn record_stage(&mut self, stage: &str) {
        self.stages.push(stage.to_string());
    }

    /// Writes the manifest; call after every artifact of the stage exists.
    pub fn save(&self, run_dir: impl AsRef<Path>) -> Result<()> {
        let path = Self::path(run_dir);
        let body = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
    }

    /// Recomputes every artifact digest.
    pub fn verify(&self, run_dir: impl AsRef<Path>) -> Result<()> {
        for (rel, rec) in &self.artifacts {
            let now = FileRecord::of(run_dir.as_ref().join(rel))?;
            if &now != rec {
                return Err(Error::Corruption(format!("{rel} changed since it was recorded")));
            }
        }
        Ok(())
    }
}

fn rel_key(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}
