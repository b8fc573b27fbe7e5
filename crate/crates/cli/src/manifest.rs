use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Per-stage provenance: seed, config digest and content hashes of what
/// the stage read and wrote. Paths are relative, so relocating an output
/// directory leaves the manifest unchanged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub seed: u64,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub stages: BTreeMap<String, StageEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Stage {
        stage: "manifest",
        source: trajekt_core::Error::Io { path: path.to_path_buf(), source: e },
    })?;
    Ok(sha256_hex(&bytes))
}

impl Manifest {
    /// Existing manifest in `dir`, or an empty one.
    pub fn load_or_new(dir: &Path, seed: u64) -> Self {
        std::fs::read_to_string(dir.join(MANIFEST_FILE))
            .ok()
            .and_then(|t| serde_json::from_str::<Manifest>(&t).ok())
            .filter(|m| m.seed == seed)
            .unwrap_or_else(|| Manifest { version: env!("CARGO_PKG_VERSION").to_string(), seed, stages: BTreeMap::new() })
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::Stage {
            stage: "manifest",
            source: trajekt_core::Error::Io { path, source: e },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn reload_keeps_entries_for_same_seed() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::load_or_new(dir.path(), 3);
        m.stages.insert("cohort".into(), StageEntry { seed: 1, ..Default::default() });
        m.write(dir.path()).unwrap();
        assert_eq!(Manifest::load_or_new(dir.path(), 3), m);
        assert!(Manifest::load_or_new(dir.path(), 4).stages.is_empty());
    }
}
