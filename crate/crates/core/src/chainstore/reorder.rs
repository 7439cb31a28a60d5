use std::collections::{BTreeMap, HashMap};

use crate::chaincore::{Block, ChainId};

/// Holds verified blocks that arrived ahead of the chain head until the
/// missing heights show up. Each entry carries a caller tag (the session a
/// block came from).
#[derive(Debug)]
pub struct ReorderBuffer<T> {
    pending: HashMap<ChainId, BTreeMap<u64, (Block, T)>>,
    per_chain_cap: usize,
}

impl<T> ReorderBuffer<T> {
    pub fn new(per_chain_cap: usize) -> Self {
        Self {
            pending: HashMap::new(),
            per_chain_cap: per_chain_cap.max(1),
        }
    }

    /// Buffers `block`; when full, the highest buffered height is dropped
    /// first since it is the furthest from being usable.
    pub fn insert(&mut self, block: Block, tag: T) {
        let slot = self.pending.entry(block.chain_id).or_default();
        slot.entry(block.height).or_insert((block, tag));
        while slot.len() > self.per_chain_cap {
            slot.pop_last();
        }
    }

    /// Removes and returns the buffered block at exactly `height`, dropping
    /// anything below it.
    pub fn take(&mut self, chain_id: &ChainId, height: u64) -> Option<(Block, T)> {
        let slot = self.pending.get_mut(chain_id)?;
        while let Some(entry) = slot.first_entry() {
            if *entry.key() < height {
                entry.remove();
            } else {
                break;
            }
        }
        let out = slot.remove(&height);
        if slot.is_empty() {
            self.pending.remove(chain_id);
        }
        out
    }

    pub fn lowest(&self, chain_id: &ChainId) -> Option<u64> {
        self.pending.get(chain_id)?.keys().next().copied()
    }

    pub fn clear_chain(&mut self, chain_id: &ChainId) {
        self.pending.remove(chain_id);
    }

    pub fn len(&self, chain_id: &ChainId) -> usize {
        self.pending.get(chain_id).map_or(0, BTreeMap::len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaincore::{Hash256, Signature};

    fn stub(height: u64) -> Block {
        Block {
            chain_id: ChainId([1; 32]),
            height,
            time: height,
            prev_hash: Hash256::ZERO,
            hash: Hash256([height as u8; 32]),
            signature: Signature([0; 64]),
            payload: vec![],
        }
    }

    #[test]
    fn releases_in_order_and_drops_stale() {
        let mut buf = ReorderBuffer::new(8);
        for h in [5, 3, 4, 1] {
            buf.insert(stub(h), h);
        }
        assert_eq!(buf.take(&ChainId([1; 32]), 3).map(|x| x.1), Some(3));
        assert_eq!(buf.lowest(&ChainId([1; 32])), Some(4));
        assert!(buf.take(&ChainId([1; 32]), 6).is_none());
        assert_eq!(buf.len(&ChainId([1; 32])), 0);
    }

    #[test]
    fn cap_evicts_highest() {
        let mut buf = ReorderBuffer::new(2);
        for h in [1, 2, 3] {
            buf.insert(stub(h), ());
        }
        assert_eq!(buf.len(&ChainId([1; 32])), 2);
        assert!(buf.take(&ChainId([1; 32]), 3).is_none());
    }
}
