//! Run manifests: what ran, with which config hash, how long each phase took,
//! and where the artifacts ended up. Written atomically at run end.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub artifact_version: String,
    pub seed: u64,
    /// Resolved configuration, embedded for aggregation and reproduction.
    pub config: serde_json::Value,
    /// Wall-clock seconds per phase (timing only, not part of reproducibility).
    pub phase_seconds: BTreeMap<String, f64>,
    pub checkpoints: Vec<PathBuf>,
    pub metrics_summary: BTreeMap<String, f64>,
    /// Free-form string labels (artifact kinds, source paths).
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: &str, seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            phase_seconds: BTreeMap::new(),
            checkpoints: Vec::new(),
            metrics_summary: BTreeMap::new(),
            labels: BTreeMap::new(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: String::new(),
        }
    }

    pub fn phase(&mut self, name: &str, seconds: f64) {
        self.phase_seconds.insert(name.to_string(), seconds);
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics_summary.insert(name.to_string(), value);
    }

    /// Write via a temp file and rename, so a manifest is either absent or
    /// complete.
    pub fn write_atomic(&mut self, path: &Path) -> Result<()> {
        self.finished_at = chrono::Utc::now().to_rfc3339();
        let json = serde_json::to_string_pretty(self)?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, json).with_context(|| format!("writing {}", tmp.display()))?;
        std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).context("parsing manifest")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let mut m = RunManifest::new("attack", "abc123", 7, serde_json::json!({"x": 1}));
        m.phase("train", 12.5);
        m.metric("pm", 0.42);
        m.checkpoints.push(PathBuf::from("adversary.ckpt"));
        m.write_atomic(&path).unwrap();
        let loaded = RunManifest::load(&path).unwrap();
        assert_eq!(loaded.command, "attack");
        assert_eq!(loaded.seed, 7);
        assert_eq!(loaded.metrics_summary["pm"], 0.42);
        assert!(!loaded.finished_at.is_empty());
    }
}
