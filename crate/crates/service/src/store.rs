//! Content-addressed artifact files on disk. Artifacts are immutable once
//! written, so readers never wait on writers.

use std::io;
use std::path::{Path, PathBuf};

use cluster_shapley::artifact::content_id;
use cluster_shapley::Artifact;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoredExplanation {
    pub explanation_id: String,
    pub dataset_id: String,
    pub k: usize,
    pub n_test: usize,
    pub feature_names: Vec<String>,
}

fn valid_id(id: &str) -> bool {
    id.len() == 16 && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

impl ArtifactStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Writes the artifact unless an identical one is stored; returns its id.
    pub fn put(&self, artifact: &Artifact) -> io::Result<String> {
        let bytes = artifact.to_bytes();
        let id = content_id(&bytes);
        let path = self.path(&id);
        if !path.exists() {
            let tmp = self.dir.join(format!(".{id}.tmp"));
            std::fs::write(&tmp, &bytes)?;
            std::fs::rename(&tmp, &path)?;
        }
        Ok(id)
    }

    /// Stored bytes, exactly as written.
    pub fn get(&self, id: &str) -> io::Result<Option<Vec<u8>>> {
        if !valid_id(id) {
            return Ok(None);
        }
        match std::fs::read(self.path(id)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Every readable artifact in the directory, by id.
    pub fn list(&self) -> io::Result<Vec<StoredExplanation>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let path = entry?.path();
            let Some(id) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(".json"))
                .filter(|id| valid_id(id))
            else {
                continue;
            };
            let Ok(bytes) = std::fs::read(&path) else { continue };
            let Ok(a) = serde_json::from_slice::<Artifact>(&bytes) else {
                tracing::warn!(path = %path.display(), "skipping unreadable artifact");
                continue;
            };
            out.push(StoredExplanation {
                explanation_id: id.to_string(),
                dataset_id: a.dataset.id.clone(),
                k: a.k(),
                n_test: a.explanation.test_indices.len(),
                feature_names: a.explanation.feature_names.clone(),
            });
        }
        out.sort_by(|a, b| a.explanation_id.cmp(&b.explanation_id));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_checked_before_touching_disk() {
        assert!(valid_id("0123456789abcdef"));
        assert!(!valid_id("../../etc/passwd"));
        assert!(!valid_id("0123456789ABCDEF"));
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::open(dir.path()).unwrap();
        assert_eq!(store.get("../x").unwrap(), None);
        assert_eq!(store.get("0123456789abcdef").unwrap(), None);
        assert!(store.list().unwrap().is_empty());
    }
}
