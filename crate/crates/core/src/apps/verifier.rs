use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};

use lru::LruCache;
use parking_lot::Mutex;

use super::record::verify_signature;
use super::{ChainRecord, RecordRejection};
use crate::chaincore::{sha256, Hash256};

/// Record verification with a cache of signatures already checked.
///
/// A record reaching a node normally gets verified twice: once when it is
/// submitted or gossiped into the pool, and again when the block carrying
/// it is projected. The cache key covers the signed digest, the key and the
/// signature, so a hit is exactly as strong as re-running the check.
pub struct RecordVerifier {
    cache: Mutex<LruCache<Hash256, ()>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl RecordVerifier {
    pub const DEFAULT_CAPACITY: usize = 1 << 18;

    pub fn new(capacity: usize) -> Self {
        Self {
            cache: Mutex::new(LruCache::new(
                NonZeroUsize::new(capacity.max(1)).expect("capacity is at least 1"),
            )),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn verify(&self, record: &ChainRecord) -> Result<(), RecordRejection> {
        record.check_schema()?;
        let digest = record.signing_digest();
        let key = cache_key(record, &digest);
        if self.cache.lock().get(&key).is_some() {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(());
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        verify_signature(record, &digest)?;
        self.cache.lock().put(key, ());
        Ok(())
    }

    /// `(hits, misses)` since construction.
    pub fn stats(&self) -> (u64, u64) {
        (self.hits.load(Ordering::Relaxed), self.misses.load(Ordering::Relaxed))
    }

    pub fn clear(&self) {
        self.cache.lock().clear();
    }
}

impl Default for RecordVerifier {
    fn default() -> Self {
        Self::new(Self::DEFAULT_CAPACITY)
    }
}

fn cache_key(record: &ChainRecord, digest: &Hash256) -> Hash256 {
    let mut buf = [0u8; 32 + 33 + 64];
    buf[..32].copy_from_slice(&digest.0);
    buf[32..65].copy_from_slice(&record.author_pub.0);
    buf[65..].copy_from_slice(&record.author_sig.0);
    sha256(&buf)
}
