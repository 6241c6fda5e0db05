use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use authstore_core::account::write_atomic;
use parking_lot::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BlobError {
    #[error("version conflict: stored version is {current}")]
    VersionConflict { current: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("corrupt blob file for {0}")]
    Corrupt(String),
}

/// One versioned blob per username. A put must carry `current + 1`.
/// Files hold `u64be version | blob` and are named by the hex username.
pub struct BlobStore {
    dir: Option<PathBuf>,
    blobs: Mutex<HashMap<String, (u64, Vec<u8>)>>,
}

impl BlobStore {
    pub fn in_memory() -> Self {
        BlobStore { dir: None, blobs: Mutex::new(HashMap::new()) }
    }

    pub fn open(dir: PathBuf) -> Result<Self, BlobError> {
        fs::create_dir_all(&dir)?;
        let mut blobs = HashMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("blob") {
                continue;
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let username = hex::decode(stem)
                .ok()
                .and_then(|b| String::from_utf8(b).ok())
                .ok_or_else(|| BlobError::Corrupt(stem.to_owned()))?;
            let bytes = fs::read(&path)?;
            if bytes.len() < 8 {
                return Err(BlobError::Corrupt(username));
            }
            let version = u64::from_be_bytes(bytes[..8].try_into().unwrap());
            blobs.insert(username, (version, bytes[8..].to_vec()));
        }
        Ok(BlobStore { dir: Some(dir), blobs: Mutex::new(blobs) })
    }

    /// `(0, [])` when nothing is stored.
    pub fn get(&self, username: &str) -> (u64, Vec<u8>) {
        self.blobs.lock().get(username).cloned().unwrap_or_default()
    }

    pub fn put(&self, username: &str, version: u64, blob: Vec<u8>) -> Result<(), BlobError> {
        let mut blobs = self.blobs.lock();
        let current = blobs.get(username).map_or(0, |(v, _)| *v);
        if current.checked_add(1) != Some(version) {
            return Err(BlobError::VersionConflict { current });
        }
        if let Some(dir) = &self.dir {
            let mut bytes = Vec::with_capacity(8 + blob.len());
            bytes.extend_from_slice(&version.to_be_bytes());
            bytes.extend_from_slice(&blob);
            write_atomic(&dir.join(format!("{}.blob", hex::encode(username))), &bytes)?;
        }
        blobs.insert(username.to_owned(), (version, blob));
        Ok(())
    }
}
