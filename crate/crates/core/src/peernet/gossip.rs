use std::collections::{HashSet, VecDeque};
use std::num::NonZeroUsize;

use lru::LruCache;

use crate::apps::{encoded_payload_len, ChainRecord, RecordFilter};
use crate::chaincore::{ChainId, Hash256};

/// Bounded set of recently seen hashes.
pub struct SeenSet {
    inner: LruCache<Hash256, ()>,
}

impl SeenSet {
    pub const DEFAULT_CAPACITY: usize = 4096;

    pub fn new(capacity: usize) -> Self {
        Self {
            inner: LruCache::new(NonZeroUsize::new(capacity.max(1)).expect("nonzero")),
        }
    }

    pub fn contains(&mut self, h: &Hash256) -> bool {
        self.inner.get(h).is_some()
    }

    /// Returns `true` when the hash was not already present.
    pub fn insert(&mut self, h: Hash256) -> bool {
        self.inner.put(h, ()).is_none()
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PooledRecord {
    pub chain_id: ChainId,
    pub record: ChainRecord,
    pub key: Hash256,
    pub encoded_len: usize,
}

/// Verified records waiting to be included in a block. One global FIFO
/// across chains, bounded by encoded bytes; the oldest record goes first
/// when the bound is hit.
#[derive(Debug, Clone)]
pub struct RecordPool {
    queue: VecDeque<PooledRecord>,
    bytes: usize,
    capacity_bytes: usize,
}

impl Default for RecordPool {
    fn default() -> Self {
        Self::new(Self::DEFAULT_CAPACITY_BYTES)
    }
}

impl RecordPool {
    /// 16 MiB.
    pub const DEFAULT_CAPACITY_BYTES: usize = 16 * 1024 * 1024;

    pub fn new(capacity_bytes: usize) -> Self {
        Self {
            queue: VecDeque::new(),
            bytes: 0,
            capacity_bytes,
        }
    }

    /// Adds a record, evicting the oldest ones until it fits. Returns the
    /// evicted records.
    pub fn push(&mut self, chain_id: ChainId, record: ChainRecord) -> Vec<PooledRecord> {
        let encoded_len = record.to_json().len();
        let key = record.dedup_key();
        let mut evicted = Vec::new();
        while self.bytes + encoded_len > self.capacity_bytes {
            match self.queue.pop_front() {
                Some(old) => {
                    self.bytes -= old.encoded_len;
                    evicted.push(old);
                }
                None => break,
            }
        }
        self.bytes += encoded_len;
        self.queue.push_back(PooledRecord {
            chain_id,
            record,
            key,
            encoded_len,
        });
        evicted
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn bytes(&self) -> usize {
        self.bytes
    }

    pub fn chain_len(&self, chain_id: &ChainId) -> usize {
        self.queue.iter().filter(|r| r.chain_id == *chain_id).count()
    }

    /// Encoded payload size if every pooled record of `chain_id` were
    /// placed in one payload.
    pub fn chain_payload_bytes(&self, chain_id: &ChainId) -> usize {
        encoded_payload_len(
            self.queue
                .iter()
                .filter(|r| r.chain_id == *chain_id)
                .map(|r| r.encoded_len),
        )
    }

    pub fn contains(&self, key: &Hash256) -> bool {
        self.queue.iter().any(|r| r.key == *key)
    }

    /// Drops pooled records of `chain_id` whose dedup key is in `sealed`.
    /// Returns how many were dropped.
    pub fn remove_sealed(&mut self, chain_id: &ChainId, sealed: &HashSet<Hash256>) -> usize {
        let before = self.queue.len();
        let mut freed = 0;
        self.queue.retain(|r| {
            let keep = r.chain_id != *chain_id || !sealed.contains(&r.key);
            if !keep {
                freed += r.encoded_len;
            }
            keep
        });
        self.bytes -= freed;
        before - self.queue.len()
    }

    /// Takes records of `chain_id` in FIFO order while the encoded payload
    /// stays within `budget`. Records rejected by `filter` are discarded.
    /// Stops at the first record that would not fit, so records are never
    /// reordered or split.
    pub fn drain_for_block(
        &mut self,
        chain_id: &ChainId,
        budget: usize,
        filter: &dyn RecordFilter,
    ) -> Vec<ChainRecord> {
        let mut taken = Vec::new();
        let mut size = 2usize;
        let mut kept = VecDeque::with_capacity(self.queue.len());
        let mut full = false;
        for r in self.queue.drain(..) {
            if full || r.chain_id != *chain_id {
                kept.push_back(r);
                continue;
            }
            if !filter.admit(&r.record) {
                self.bytes -= r.encoded_len;
                continue;
            }
            let extra = r.encoded_len + usize::from(!taken.is_empty());
            if size + extra > budget {
                full = true;
                kept.push_back(r);
                continue;
            }
            size += extra;
            self.bytes -= r.encoded_len;
            taken.push(r.record);
        }
        self.queue = kept;
        taken
    }
}
