//! Run manifests: every subcommand records what it was asked to do, what it
//! read, what it wrote, and the digests of what it wrote — enough to audit
//! any artifact back to its exact invocation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lexforge_core::eval::timestamp;
use lexforge_core::util::fnv1a_file;
use serde::Serialize;

use crate::fail::Failure;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Resolved configuration after file + flag layering (empty when the
    /// subcommand takes no training configuration).
    pub config: BTreeMap<String, String>,
    /// Input role → path.
    pub inputs: BTreeMap<String, String>,
    /// Seed in effect, when the subcommand uses randomness.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Artifact file name → FNV-1a digest (hex) of its bytes.
    pub artifacts: BTreeMap<String, String>,
    /// Unix seconds; honors `SOURCE_DATE_EPOCH`.
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config: BTreeMap::new(),
            inputs: BTreeMap::new(),
            seed: None,
            artifacts: BTreeMap::new(),
            timestamp_unix: timestamp(),
        }
    }

    /// Record the resolved configuration from its `key = value` echo.
    pub fn set_config_text(&mut self, kv_text: &str) {
        for line in kv_text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.config
                    .insert(k.trim().to_string(), v.trim().to_string());
            }
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) {
        self.inputs
            .insert(role.to_string(), path.display().to_string());
    }

    /// Digest one produced artifact (path relative to the manifest's home).
    pub fn add_artifact(&mut self, dir: &Path, name: &str) -> Result<(), Failure> {
        let digest = fnv1a_file(&dir.join(name))?;
        self.artifacts.insert(name.to_string(), format!("{digest:016x}"));
        Ok(())
    }

    /// Write `manifest.json` into `dir`. Call last, after every artifact has
    /// been digested.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, Failure> {
        let path = dir.join("manifest.json");
        let mut json =
            serde_json::to_string_pretty(self).expect("manifest serializes infallibly");
        json.push('\n');
        std::fs::write(&path, json)?;
        Ok(path)
    }
}
