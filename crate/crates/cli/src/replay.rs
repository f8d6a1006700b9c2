//! Byte-exact replay verification: re-run the configuration recorded next to
//! a manifest into a scratch directory and compare every artifact.

use crate::config::ExperimentConfig;
use crate::manifest::{sha256_hex, Manifest};
use anyhow::{bail, Context, Result};
use std::path::Path;

pub fn replay(manifest_path: &Path) -> Result<bool> {
    let manifest = Manifest::read(manifest_path)?;
    let out_dir = manifest_path
        .parent()
        .context("manifest has no parent directory")?;
    let config_text = std::fs::read_to_string(out_dir.join("config.toml"))
        .context("config.toml missing next to the manifest")?;
    let cfg = ExperimentConfig::parse(&config_text)?;

    let scratch = out_dir.with_file_name(format!(
        "{}__replay",
        out_dir.file_name().and_then(|s| s.to_str()).unwrap_or("run")
    ));
    if scratch.exists() {
        std::fs::remove_dir_all(&scratch)?;
    }
    crate::execute(&cfg, &scratch)?;

    let mut mismatch = None;
    for entry in &manifest.artifacts {
        let original = std::fs::read(out_dir.join(&entry.path))
            .with_context(|| format!("original artifact {} missing", entry.path))?;
        let replayed = std::fs::read(scratch.join(&entry.path))
            .with_context(|| format!("replayed artifact {} missing", entry.path))?;
        if sha256_hex(&original) != entry.sha256 {
            bail!("original artifact {} no longer matches its manifest digest", entry.path);
        }
        if original != replayed {
            mismatch = Some(entry.path.clone());
            break;
        }
    }
    match mismatch {
        Some(path) => {
            println!("MISMATCH at {path}");
            Ok(false)
        }
        None => {
            println!("replay verified: {} artifacts identical", manifest.artifacts.len());
            Ok(true)
        }
    }
}
