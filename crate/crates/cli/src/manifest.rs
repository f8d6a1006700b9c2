//! Run manifests: configuration hash, seed, resolved settings, and per-file
//! digests of every artifact, enabling byte-exact replay verification.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub code_version: String,
    pub seed: u64,
    pub config_sha256: String,
    /// full configuration echo with defaults applied
    pub resolved_config: serde_json::Value,
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn collect(
        scenario: &str,
        seed: u64,
        config_text: &str,
        resolved: serde_json::Value,
        out_dir: &Path,
        artifact_names: &[String],
    ) -> Result<Manifest> {
        let mut artifacts = Vec::new();
        for name in artifact_names {
            let bytes = std::fs::read(out_dir.join(name))
                .with_context(|| format!("missing artifact {name}"))?;
            artifacts.push(ArtifactEntry { path: name.clone(), sha256: sha256_hex(&bytes) });
        }
        Ok(Manifest {
            scenario: scenario.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_sha256: sha256_hex(config_text.as_bytes()),
            resolved_config: resolved,
            artifacts,
        })
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}
