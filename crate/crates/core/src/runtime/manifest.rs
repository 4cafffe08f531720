use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RunConfig, RuntimeError};
use crate::Method;

/// Progress of one entry. Entries only move forward, except that a failed
/// entry is retried on the next invocation from wherever its artifacts
/// leave off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Induced,
    Inferred,
    Evaluated,
    Failed,
}

/// Identifies one (task, method, inducing model, inference model) run.
/// Instance-level methods have no inducing model.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntryKey {
    pub task: String,
    pub method: Method,
    pub inducing_model: Option<String>,
    pub inference_model: String,
}

impl EntryKey {
    pub fn is_self_induced(&self) -> bool {
        self.inducing_model.as_ref().is_none_or(|m| *m == self.inference_model)
    }
}

impl std::fmt::Display for EntryKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} / {} / {} -> {}",
            self.task,
            self.method.id(),
            self.inducing_model.as_deref().unwrap_or("-"),
            self.inference_model
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub key: EntryKey,
    pub status: Status,
    /// Run-directory relative path of the induced prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub induced: Option<String>,
    /// Run-directory relative path of the records file.
    pub records: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub entries: Vec<ManifestEntry>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Option<Self>, RuntimeError> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| RuntimeError::Config(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(RuntimeError::Io {
                path: path.to_path_buf(),
                source,
            }),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), RuntimeError> {
        crate::fsutil::write_json_atomic(path, self).map_err(|source| RuntimeError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn entry_mut(&mut self, key: &EntryKey) -> Option<&mut ManifestEntry> {
        self.entries.iter_mut().find(|e| &e.key == key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_order_is_forward() {
        assert!(Status::Pending < Status::Induced);
        assert!(Status::Induced < Status::Inferred);
        assert!(Status::Inferred < Status::Evaluated);
    }

    #[test]
    fn round_trip_and_atomic_save() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        assert_eq!(RunManifest::load(&path).unwrap(), None);
        let m = RunManifest {
            config: RunConfig::default(),
            entries: vec![ManifestEntry {
                key: EntryKey {
                    task: "t".into(),
                    method: Method::ZCoT,
                    inducing_model: None,
                    inference_model: "m".into(),
                },
                status: Status::Pending,
                induced: None,
                records: "records/x.jsonl".into(),
                error: None,
            }],
        };
        m.save(&path).unwrap();
        assert_eq!(RunManifest::load(&path).unwrap(), Some(m));
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"status\": \"pending\""));
    }
}
