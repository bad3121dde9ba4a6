//! Content-addressed artifact cache.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Hex SHA-256 over length-prefixed parts.
pub fn content_key<I, P>(parts: I) -> String
where
    I: IntoIterator<Item = P>,
    P: AsRef<[u8]>,
{
    let mut h = Sha256::new();
    for p in parts {
        let p = p.as_ref();
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// Stores byte blobs as `<dir>/<stage>/<key>.<ext>` and counts hits and misses.
#[derive(Debug)]
pub struct Cache {
    dir: PathBuf,
    hits: AtomicUsize,
    computed: AtomicUsize,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            hits: AtomicUsize::new(0),
            computed: AtomicUsize::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, stage: &str, key: &str, ext: &str) -> PathBuf {
        self.dir.join(stage).join(format!("{key}.{ext}"))
    }

    /// Returns the cached blob, or computes, stores and returns it.
    pub fn get_or_compute<F>(&self, stage: &str, key: &str, ext: &str, compute: F) -> Result<Vec<u8>>
    where
        F: FnOnce() -> Result<Vec<u8>>,
    {
        let path = self.path(stage, key, ext);
        if let Ok(bytes) = std::fs::read(&path) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(bytes);
        }
        let bytes = compute()?;
        self.computed.fetch_add(1, Ordering::Relaxed);
        let parent = path.parent().expect("cache paths have a stage directory");
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        // write-then-rename so concurrent readers never see a partial file
        let tmp = path.with_extension(format!("{ext}.tmp{}", std::process::id()));
        std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(bytes)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn computed(&self) -> usize {
        self.computed.load(Ordering::Relaxed)
    }
}
