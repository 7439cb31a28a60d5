use std::time::Duration;

use parking_lot::Mutex;

use crate::apps::{encode_payload, RecordFilter};
use crate::chaincore::{
    genesis_payload, seal_block, Block, BlockDraft, ChainError, ChainId, Hash256, KeyPair, MAX_PAYLOAD_BYTES,
};
use crate::chainstore::{ChainStore, StoreError};
use crate::peernet::RecordPool;

/// Seals the genesis block of the chain owned by `owner`.
pub fn create_genesis(owner: &KeyPair, label: &str, time: u64) -> Result<Block, ChainError> {
    seal_block(
        BlockDraft {
            chain_id: owner.chain_id(),
            height: 0,
            time,
            prev_hash: Hash256::ZERO,
            payload: genesis_payload(owner.public_key(), label),
        },
        owner,
    )
}

/// Drains pooled records for `chain_id` in FIFO order into one payload of
/// at most 1 MiB and seals the successor of `prev_head`. Returns `None`
/// when nothing is pooled or every pooled record was filtered out.
pub fn assemble_block(
    pool: &mut RecordPool,
    chain_id: &ChainId,
    owner: &KeyPair,
    prev_head: &Block,
    now: u64,
    filter: &dyn RecordFilter,
) -> Result<Option<Block>, ChainError> {
    if owner.chain_id() != *chain_id {
        return Err(ChainError::WrongOwner);
    }
    if pool.chain_len(chain_id) == 0 {
        return Ok(None);
    }
    let records = pool.drain_for_block(chain_id, MAX_PAYLOAD_BYTES, filter);
    if records.is_empty() {
        return Ok(None);
    }
    let payload = encode_payload(&records).map_err(|_| ChainError::PayloadTooLarge {
        len: MAX_PAYLOAD_BYTES + 1,
        max: MAX_PAYLOAD_BYTES,
    })?;
    seal_block(
        BlockDraft {
            chain_id: *chain_id,
            height: prev_head.height + 1,
            time: now.max(prev_head.time + 1),
            prev_hash: prev_head.hash,
            payload,
        },
        owner,
    )
    .map(Some)
}

/// When an owner should seal: after `interval`, or as soon as the pooled
/// records of the chain fill `fill_ratio` of a block.
#[derive(Debug, Clone, Copy)]
pub struct ProductionPolicy {
    pub interval: Duration,
    pub fill_ratio: f64,
}

impl Default for ProductionPolicy {
    fn default() -> Self {
        Self {
            interval: Duration::from_secs(10),
            fill_ratio: 0.9,
        }
    }
}

impl ProductionPolicy {
    pub fn should_produce(&self, since_last: Duration, pooled_payload_bytes: usize, pooled: usize) -> bool {
        pooled > 0
            && (since_last >= self.interval
                || pooled_payload_bytes as f64 >= self.fill_ratio * MAX_PAYLOAD_BYTES as f64)
    }
}

/// Chain-owner block production against a store. The head is read and the
/// sealed block appended under one lock, so two calls can never seal two
/// different blocks at the same height.
pub struct BlockProducer {
    owner: KeyPair,
    lock: Mutex<()>,
}

impl BlockProducer {
    pub fn new(owner: KeyPair) -> Self {
        Self {
            owner,
            lock: Mutex::new(()),
        }
    }

    pub fn chain_id(&self) -> ChainId {
        self.owner.chain_id()
    }

    pub fn owner(&self) -> &KeyPair {
        &self.owner
    }

    /// Creates and stores the genesis block if the chain is empty.
    pub fn ensure_genesis(&self, store: &ChainStore, label: &str, now: u64) -> Result<Block, StoreError> {
        let _guard = self.lock.lock();
        let id = self.chain_id();
        if let Some(b) = store.get_block(&id, 0)? {
            return Ok(b);
        }
        let g = create_genesis(&self.owner, label, now).map_err(|e| StoreError::InvalidEntry(e.to_string()))?;
        store.append_block(&id, g.clone())?;
        Ok(g)
    }

    pub fn produce(
        &self,
        store: &ChainStore,
        pool: &mut RecordPool,
        now: u64,
        filter: &dyn RecordFilter,
    ) -> Result<Option<Block>, StoreError> {
        let _guard = self.lock.lock();
        let id = self.chain_id();
        let head = store.get_head(&id)?.ok_or(StoreError::Gap { expected: 0, got: 1 })?;
        let Some(block) = assemble_block(pool, &id, &self.owner, &head, now, filter)
            .map_err(|e| StoreError::InvalidEntry(e.to_string()))?
        else {
            return Ok(None);
        };
        store.append_block(&id, block.clone())?;
        Ok(Some(block))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::apps::{decode_payload, make_post, AcceptAll, ChainRecord};
    use crate::chaincore::generate_keypair;
    use crate::chainstore::ChainRegistry;

    fn owner() -> KeyPair {
        generate_keypair(Some([0x91; 32])).unwrap()
    }

    #[test]
    fn empty_pool_is_nothing_to_do() {
        let k = owner();
        let g = create_genesis(&k, "c", 10).unwrap();
        let mut pool = RecordPool::default();
        assert_eq!(
            assemble_block(&mut pool, &k.chain_id(), &k, &g, 20, &AcceptAll).unwrap(),
            None
        );
    }

    #[test]
    fn time_is_forced_forward() {
        let k = owner();
        let g = create_genesis(&k, "c", 10).unwrap();
        let mut pool = RecordPool::default();
        pool.push(k.chain_id(), make_post(&k, "x", None, 1).unwrap());
        let b = assemble_block(&mut pool, &k.chain_id(), &k, &g, 3, &AcceptAll)
            .unwrap()
            .unwrap();
        assert_eq!(b.time, 11);
        assert_eq!(b.height, 1);
        assert_eq!(b.prev_hash, g.hash);
        pool.push(k.chain_id(), make_post(&k, "y", None, 1).unwrap());
        let c = assemble_block(&mut pool, &k.chain_id(), &k, &b, 50, &AcceptAll)
            .unwrap()
            .unwrap();
        assert_eq!(c.time, 50);
    }

    #[test]
    fn filter_hook_applies() {
        let k = owner();
        let g = create_genesis(&k, "c", 10).unwrap();
        let mut pool = RecordPool::default();
        pool.push(k.chain_id(), make_post(&k, "keep", None, 1).unwrap());
        pool.push(k.chain_id(), make_post(&k, "spam", None, 2).unwrap());
        let no_spam = |r: &ChainRecord| !r.to_json().contains("spam");
        let b = assemble_block(&mut pool, &k.chain_id(), &k, &g, 11, &no_spam)
            .unwrap()
            .unwrap();
        let recs = decode_payload(&b.payload).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(pool.is_empty());
    }

    #[test]
    fn policy_triggers() {
        let p = ProductionPolicy::default();
        assert!(!p.should_produce(Duration::from_secs(60), 0, 0));
        assert!(!p.should_produce(Duration::from_secs(1), 1000, 3));
        assert!(p.should_produce(Duration::from_secs(10), 1000, 3));
        assert!(p.should_produce(Duration::ZERO, 943_719, 3000));
    }

    #[test]
    fn concurrent_producers_never_fork() {
        let k = owner();
        let mut reg = ChainRegistry::in_memory();
        reg.add_default(k.public_key(), "c").unwrap();
        let store = Arc::new(ChainStore::in_memory(reg));
        let producer = Arc::new(BlockProducer::new(k.clone()));
        producer.ensure_genesis(&store, "c", 1).unwrap();
        let pool = Arc::new(Mutex::new(RecordPool::default()));
        for i in 0..64 {
            pool.lock()
                .push(k.chain_id(), make_post(&k, &format!("p{i}"), None, i).unwrap());
        }
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let (store, producer, pool, k) = (store.clone(), producer.clone(), pool.clone(), k.clone());
                std::thread::spawn(move || {
                    for i in 0..8u64 {
                        {
                            let mut p = pool.lock();
                            p.push(k.chain_id(), make_post(&k, &format!("t{t}-{i}"), None, i).unwrap());
                        }
                        let mut p = pool.lock().clone();
                        let _ = producer.produce(&store, &mut p, 2, &AcceptAll);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(store.verify_chain(&k.chain_id()).is_empty());
        let head = store.head_height(&k.chain_id()).unwrap();
        assert_eq!(head, 64);
        for h in 0..=head {
            assert_eq!(store.get_block(&k.chain_id(), h).unwrap().unwrap().height, h);
        }
    }
}
