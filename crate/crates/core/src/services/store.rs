//! Content-addressed blob store and hash-validated JSON cache.

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Serialize};

use super::ServiceError;
use crate::util::{atomic_write, sha256_hex};

/// Locator of a stored blob: the lowercase hex SHA-256 of its content.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BlobRef(pub String);

impl std::fmt::Display for BlobRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Content-addressed store with the layout `<root>/<2-char-prefix>/<hash>`.
/// Reads re-hash the content, so corruption is detected on access.
pub struct BlobStore {
    root: PathBuf,
}

impl BlobStore {
    pub fn open(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(BlobStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn blob_path(&self, hash: &str) -> PathBuf {
        self.root.join(&hash[..2]).join(hash)
    }

    pub fn put(&self, bytes: &[u8]) -> Result<BlobRef, ServiceError> {
        let hash = sha256_hex(bytes);
        let path = self.blob_path(&hash);
        if !path.exists() {
            atomic_write(&path, bytes)?;
        }
        Ok(BlobRef(hash))
    }

    pub fn get(&self, locator: &BlobRef) -> Result<Vec<u8>, ServiceError> {
        let path = self.blob_path(&locator.0);
        let bytes = std::fs::read(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                ServiceError::BlobMissing(locator.0.clone())
            } else {
                ServiceError::Io(e)
            }
        })?;
        let actual = sha256_hex(&bytes);
        if actual != locator.0 {
            return Err(ServiceError::CacheCorrupt {
                path: path.display().to_string(),
                detail: format!("content hash {actual} != locator"),
            });
        }
        Ok(bytes)
    }

    pub fn contains(&self, locator: &BlobRef) -> bool {
        self.blob_path(&locator.0).exists()
    }
}

/// Keyed JSON cache with a stored payload hash per entry. Lazily creates its
/// directory on first write; a missing directory just means cache misses.
pub struct JsonCache {
    dir: PathBuf,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct CacheEntry {
    payload_hash: String,
    payload: String,
}

impl JsonCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        JsonCache { dir: dir.into() }
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        let key = sha256_hex(key.as_bytes());
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, ServiceError> {
        let path = self.entry_path(key);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(ServiceError::Io(e)),
        };
        let entry: CacheEntry = serde_json::from_str(&text).map_err(|e| ServiceError::CacheCorrupt {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        if sha256_hex(entry.payload.as_bytes()) != entry.payload_hash {
            return Err(ServiceError::CacheCorrupt {
                path: path.display().to_string(),
                detail: "payload hash mismatch".into(),
            });
        }
        let value = serde_json::from_str(&entry.payload).map_err(|e| ServiceError::CacheCorrupt {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Ok(Some(value))
    }

    pub fn put<T: Serialize>(&self, key: &str, value: &T) -> Result<(), ServiceError> {
        let payload = serde_json::to_string(value).expect("cache value serializes");
        let entry = CacheEntry {
            payload_hash: sha256_hex(payload.as_bytes()),
            payload,
        };
        let bytes = serde_json::to_vec(&entry).expect("cache entry serializes");
        atomic_write(&self.entry_path(key), &bytes)?;
        Ok(())
    }
}
