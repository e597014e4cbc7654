//! Content-addressed dataset cache.

use std::path::{Path, PathBuf};

use horizon_core::data::{read_dataset, write_dataset, Dataset, DATASET_VERSION};
use horizon_core::eval::write_atomic;
use horizon_core::{Error, Result};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Environment variable naming the cache directory.
pub const CACHE_ENV: &str = "HRL_CACHE_DIR";

/// Hex SHA-256 of the canonical JSON of `key` and the file format version.
pub fn content_hash(key: &Value) -> String {
    let doc = json!({ "format_version": DATASET_VERSION, "key": key });
    let digest = Sha256::digest(doc.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn cache_path(dir: &Path, key: &Value) -> PathBuf {
    dir.join(format!("{}.hrld", content_hash(key)))
}

/// Load the dataset for `key` from `dir`, or build and store it. Unreadable
/// cache entries are rebuilt.
pub fn cached_dataset(dir: Option<&Path>, key: &Value, build: impl FnOnce() -> Result<Dataset>) -> Result<Dataset> {
    let Some(dir) = dir else {
        return build();
    };
    let path = cache_path(dir, key);
    if let Ok(bytes) = std::fs::read(&path) {
        if let Ok(ds) = read_dataset(bytes.as_slice()) {
            return Ok(ds);
        }
    }
    let ds = build()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bytes = Vec::new();
    write_dataset(&ds, &mut bytes).map_err(|e| Error::io(&path, e))?;
    write_atomic(&path, &bytes)?;
    Ok(ds)
}
