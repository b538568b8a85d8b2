//! `manifest.json`: every artifact in the output directory with its SHA-256,
//! the command that wrote it and the master seed. Downstream commands check
//! their inputs against it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub sha256: String,
    pub command: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, ArtifactEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| AppError::json(&path, e)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(AppError::io(&path, e)),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| AppError::json(dir.join(MANIFEST_FILE), e))?;
        text.push('\n');
        crate::io::write_text(&dir.join(MANIFEST_FILE), &text)
    }

    /// Hash and record artifacts (paths relative to `dir`).
    pub fn record(&mut self, dir: &Path, names: &[String], command: &str, seed: u64) -> Result<()> {
        for name in names {
            let sha256 = sha256_file(&dir.join(name))?;
            self.artifacts.insert(
                name.clone(),
                ArtifactEntry {
                    sha256,
                    command: command.into(),
                    seed,
                },
            );
        }
        Ok(())
    }

    /// Fail if `path` lives in `dir`, is listed, and no longer matches its hash.
    pub fn verify(&self, dir: &Path, path: &Path) -> Result<()> {
        let Ok(rel) = path.strip_prefix(dir) else {
            return Ok(());
        };
        let Some(entry) = self.artifacts.get(&rel.to_string_lossy().into_owned()) else {
            return Ok(());
        };
        if sha256_file(path)? != entry.sha256 {
            return Err(AppError::Stale {
                path: PathBuf::from(path),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_modified_artifact() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "x\n1\n").unwrap();
        let mut m = Manifest::default();
        m.record(dir.path(), &["a.csv".into()], "ingest", 3)
            .unwrap();
        m.save(dir.path()).unwrap();
        let m = Manifest::load(dir.path()).unwrap();
        m.verify(dir.path(), &dir.path().join("a.csv")).unwrap();
        std::fs::write(dir.path().join("a.csv"), "x\n2\n").unwrap();
        assert!(matches!(
            m.verify(dir.path(), &dir.path().join("a.csv")),
            Err(AppError::Stale { .. })
        ));
        std::fs::write(dir.path().join("abc"), "abc").unwrap();
        assert_eq!(
            sha256_file(&dir.path().join("abc")).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
