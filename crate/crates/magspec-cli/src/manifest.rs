//! `manifest.json`: what was produced, from which inputs, and how long it took.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use magspec::eigensolver::CACHE_VERSION;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, MANIFEST_VERSION, REPORT_VERSION};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: StageStatus,
    pub seconds: f64,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    /// `k` values whose eigen-data came from the cache.
    #[serde(default)]
    pub cache_hits: Vec<u32>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatVersions {
    pub manifest: u32,
    pub report: u32,
    pub cache: u32,
}

impl Default for FormatVersions {
    fn default() -> Self {
        FormatVersions {
            manifest: MANIFEST_VERSION,
            report: REPORT_VERSION,
            cache: CACHE_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub formats: FormatVersions,
    pub config: RunConfig,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn path(out: &Path) -> PathBuf {
        out.join("manifest.json")
    }

    /// The manifest already in `out` if it was written for the same
    /// configuration hash, otherwise a fresh one.
    pub fn open(out: &Path, config: &RunConfig) -> Self {
        let hash = config.hash_hex();
        std::fs::read_to_string(Self::path(out))
            .ok()
            .and_then(|t| serde_json::from_str::<RunManifest>(&t).ok())
            .filter(|m| m.config_hash == hash && m.formats == FormatVersions::default())
            .unwrap_or_else(|| RunManifest {
                config_hash: hash,
                formats: FormatVersions::default(),
                config: config.clone(),
                stages: BTreeMap::new(),
            })
    }

    pub fn record(&mut self, stage: &str, record: StageRecord) {
        self.stages.insert(stage.to_string(), record);
    }

    pub fn save(&self, out: &Path) -> Result<(), CliError> {
        let path = Self::path(out);
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| CliError::Io(path, e))
    }
}
