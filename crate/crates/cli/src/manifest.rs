//! `manifest.json`: config echo, tool version, and per-stage timings and
//! output digests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use segdyn::io;

use crate::config::PipelineConfig;
use crate::error::CliError;

pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub wall_seconds: f64,
    /// Output path relative to the run directory, mapped to its SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|source| segdyn::Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn new(config: &PipelineConfig) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            stages: BTreeMap::new(),
        }
    }

    /// Existing manifest in `dir` if its config matches, otherwise a fresh
    /// one. A changed config invalidates every earlier stage record.
    pub fn open(dir: &Path, config: &PipelineConfig) -> Self {
        match io::read_json::<RunManifest>(&dir.join(MANIFEST_JSON)) {
            Ok(m) if m.config == *config => m,
            _ => RunManifest::new(config),
        }
    }

    pub fn record(&mut self, dir: &Path, stage: &str, wall_seconds: f64, outputs: &[String]) -> Result<(), CliError> {
        let mut digests = BTreeMap::new();
        for name in outputs {
            digests.insert(name.clone(), sha256_file(&dir.join(name))?);
        }
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                wall_seconds,
                outputs: digests,
            },
        );
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        Ok(io::write_json(&dir.join(MANIFEST_JSON), self)?)
    }
}
