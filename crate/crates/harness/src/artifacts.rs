//! Stage manifests. Each stage directory holds a `manifest.json` naming the
//! run, the stage, the hash of the configuration the stage depends on, and
//! the files it produced. The manifest is written last, so a directory
//! without one is an interrupted stage.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub stage: String,
    pub config_hash: String,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn path(dir: &Path) -> PathBuf {
        dir.join(MANIFEST)
    }

    pub fn read(dir: &Path) -> Result<Option<Self>> {
        let p = Self::path(dir);
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&fs::read_to_string(p)?)?))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::write(Self::path(dir), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Whether `dir` already holds a complete stage for `hash`. A manifest
/// with a different hash is an error unless `force` is set, in which case
/// it is discarded.
pub fn is_complete(dir: &Path, hash: &str, force: bool) -> Result<bool> {
    let Some(m) = Manifest::read(dir)? else {
        return Ok(false);
    };
    if m.config_hash != hash {
        if force {
            fs::remove_file(Manifest::path(dir))?;
            return Ok(false);
        }
        return Err(HarnessError::HashMismatch {
            path: dir.to_path_buf(),
            expected: hash.to_string(),
            found: m.config_hash,
        });
    }
    Ok(m.files.iter().all(|f| dir.join(f).exists()))
}

/// Confirms a required upstream stage has completed and returns its hash.
pub fn require(dir: &Path) -> Result<String> {
    match Manifest::read(dir)? {
        Some(m) => Ok(m.config_hash),
        None => Err(HarnessError::MissingArtifact(dir.to_path_buf())),
    }
}
