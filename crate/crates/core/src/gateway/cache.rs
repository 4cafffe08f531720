use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CompletionRequest, GatewayError};

/// SHA-256 over the request fields that determine a response.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn of(req: &CompletionRequest) -> Self {
        let mut h = Sha256::new();
        let mut field = |bytes: &[u8]| {
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        };
        field(req.profile.provider_id.as_bytes());
        field(req.profile.model_name.as_bytes());
        field(req.prompt.as_bytes());
        field(&req.temperature.to_bits().to_le_bytes());
        field(&req.top_p.to_bits().to_le_bytes());
        match req.reasoning_effort {
            Some(e) => field(e.to_string().as_bytes()),
            None => field(b""),
        }
        if req.attempt > 0 {
            field(b"attempt");
            field(&req.attempt.to_le_bytes());
        }
        CacheKey(hex::encode(h.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Response bodies keyed by digest: one file per digest on disk, or a map
/// in memory for tests.
pub enum Cache {
    Disk(PathBuf),
    Memory(Mutex<HashMap<CacheKey, String>>),
    Disabled,
}

impl Cache {
    pub fn disk(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| GatewayError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(Cache::Disk(dir))
    }

    pub fn memory() -> Self {
        Cache::Memory(Mutex::new(HashMap::new()))
    }

    fn path(dir: &std::path::Path, key: &CacheKey) -> PathBuf {
        dir.join(format!("{}.json", key.as_str()))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<String>, GatewayError> {
        match self {
            Cache::Disk(dir) => match std::fs::read_to_string(Self::path(dir, key)) {
                Ok(body) => Ok(Some(body)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(GatewayError::Cache(e.to_string())),
            },
            Cache::Memory(map) => Ok(map.lock().unwrap().get(key).cloned()),
            Cache::Disabled => Ok(None),
        }
    }

    pub fn put(&self, key: &CacheKey, body: &str) -> Result<(), GatewayError> {
        match self {
            Cache::Disk(dir) => {
                let target = Self::path(dir, key);
                crate::fsutil::write_atomic(&target, body.as_bytes())
                    .map_err(|e| GatewayError::Cache(format!("{}: {e}", target.display())))
            }
            Cache::Memory(map) => {
                map.lock().unwrap().insert(key.clone(), body.to_string());
                Ok(())
            }
            Cache::Disabled => Ok(()),
        }
    }
}
