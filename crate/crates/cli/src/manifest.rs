use crate::error::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    pub index: usize,
    pub seed: u64,
    pub split: Split,
    pub wav: String,
    pub annotation: String,
    pub embeddings: String,
    /// Hex SHA-256 per file name.
    pub sha256: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub root_seed: u64,
    pub sample_rate: u32,
    pub duration_s: f64,
    pub n_classes: usize,
    pub embed_dim: usize,
    pub scenes: Vec<SceneEntry>,
}

impl Manifest {
    pub const VERSION: u32 = 1;

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let m: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        if m.version != Self::VERSION {
            return Err(CliError::Validation(format!("unsupported manifest version {}", m.version)));
        }
        Ok(m)
    }
}

impl SceneEntry {
    /// Fails when a listed file is missing or its checksum differs.
    pub fn verify(&self, dir: &Path) -> Result<(), CliError> {
        for (name, want) in &self.sha256 {
            let got = file_sha256(&dir.join(name))?;
            if &got != want {
                return Err(CliError::Runtime(format!("checksum mismatch for {name}")));
            }
        }
        Ok(())
    }
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}
