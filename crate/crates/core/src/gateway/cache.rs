//! Content-addressed response cache.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::GatewayError;

/// Stored entry; immutable once written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub value: Value,
    pub created_at: u64,
}

pub trait ResponseCache: Send + Sync {
    fn get(&self, key: &str) -> Result<Option<Value>, GatewayError>;
    /// First write wins; later writes for an existing key are ignored.
    fn put(&self, key: &str, value: &Value) -> Result<(), GatewayError>;
}

#[derive(Debug, Default)]
pub struct MemoryCache {
    entries: RwLock<HashMap<String, Value>>,
}

impl MemoryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ResponseCache for MemoryCache {
    fn get(&self, key: &str) -> Result<Option<Value>, GatewayError> {
        Ok(self.entries.read().expect("cache lock").get(key).cloned())
    }

    fn put(&self, key: &str, value: &Value) -> Result<(), GatewayError> {
        self.entries.write().expect("cache lock").entry(key.to_string()).or_insert_with(|| value.clone());
        Ok(())
    }
}

/// One JSON file per key under a directory; filename is the key hex.
#[derive(Debug)]
pub struct DiskCache {
    dir: PathBuf,
    tmp_counter: AtomicU64,
}

impl DiskCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| GatewayError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir, tmp_counter: AtomicU64::new(0) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> Result<PathBuf, GatewayError> {
        if key.is_empty() || !key.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(GatewayError::Cache(format!("invalid cache key `{key}`")));
        }
        Ok(self.dir.join(key))
    }
}

impl ResponseCache for DiskCache {
    fn get(&self, key: &str) -> Result<Option<Value>, GatewayError> {
        let path = self.path(key)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(GatewayError::Cache(format!("{}: {e}", path.display()))),
        };
        let entry: CacheEntry =
            serde_json::from_slice(&bytes).map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))?;
        Ok(Some(entry.value))
    }

    fn put(&self, key: &str, value: &Value) -> Result<(), GatewayError> {
        let path = self.path(key)?;
        if path.exists() {
            return Ok(());
        }
        let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let entry = CacheEntry { key: key.to_string(), value: value.clone(), created_at };
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = self.dir.join(format!(".{key}.{}.{n}.tmp", std::process::id()));
        let err = |e: std::io::Error| GatewayError::Cache(format!("{}: {e}", tmp.display()));
        let mut f = fs::File::create(&tmp).map_err(err)?;
        f.write_all(&serde_json::to_vec(&entry).expect("serializable")).map_err(err)?;
        f.sync_all().map_err(err)?;
        drop(f);
        fs::rename(&tmp, &path).map_err(err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn disk_first_write_wins() {
        let dir = tempfile::tempdir().unwrap();
        let c = DiskCache::open(dir.path().join("cache")).unwrap();
        let key = "ab12";
        assert_eq!(c.get(key).unwrap(), None);
        c.put(key, &json!({"probability": 0.25})).unwrap();
        c.put(key, &json!({"probability": 0.75})).unwrap();
        assert_eq!(c.get(key).unwrap(), Some(json!({"probability": 0.25})));
        assert!(c.dir().join(key).is_file());
        let names: Vec<_> = fs::read_dir(c.dir()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn disk_rejects_path_keys() {
        let dir = tempfile::tempdir().unwrap();
        let c = DiskCache::open(dir.path()).unwrap();
        assert!(c.get("../etc").is_err());
    }

    #[test]
    fn memory_first_write_wins() {
        let c = MemoryCache::new();
        c.put("k", &json!(1)).unwrap();
        c.put("k", &json!(2)).unwrap();
        assert_eq!(c.get("k").unwrap(), Some(json!(1)));
        assert_eq!(c.len(), 1);
    }
}
