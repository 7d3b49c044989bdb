use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SparcError};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub name: String,
    pub dim: usize,
    pub data_file: PathBuf,
}

/// Top-level description of a store. Paths are relative to the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreManifest {
    pub version: u32,
    pub sample_count: usize,
    pub streams: Vec<StreamSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy_file: Option<PathBuf>,
    /// Free-form provenance (e.g. which pooling an extractor used).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

impl StoreManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SparcError::io(path, e))?;
        let manifest: StoreManifest = serde_json::from_str(&text)
            .map_err(|e| SparcError::format("manifest", format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| SparcError::format("manifest", e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| SparcError::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(SparcError::format(
                "manifest",
                format!("unsupported version {}", self.version),
            ));
        }
        if self.streams.is_empty() {
            return Err(SparcError::format("manifest", "no streams declared"));
        }
        let mut seen = HashSet::new();
        for s in &self.streams {
            if s.name.is_empty() {
                return Err(SparcError::format("manifest", "empty stream name"));
            }
            if s.dim == 0 {
                return Err(SparcError::format(
                    "manifest",
                    format!("stream `{}` has dim 0", s.name),
                ));
            }
            if !seen.insert(s.name.as_str()) {
                return Err(SparcError::DuplicateStream(s.name.clone()));
            }
        }
        Ok(())
    }

    pub fn stream_index(&self, name: &str) -> Option<usize> {
        self.streams.iter().position(|s| s.name == name)
    }
}
