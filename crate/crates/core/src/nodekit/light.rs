use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::chaincore::{detect_equivocation, validate_successor, verify_block, Block, ChainId, PublicKey};
use crate::chainstore::{ChainRegistry, ChainStatus};
use crate::peernet::{AcceptOutcome, Ledger};
use crate::wire::{LocalView, NodeKind};

/// Per-chain ring of the most recent contiguous verified blocks.
#[derive(Debug, Clone)]
pub struct LightCache {
    depth: usize,
    runs: HashMap<ChainId, VecDeque<Block>>,
}

impl LightCache {
    pub fn new(depth: usize) -> Self {
        Self {
            depth: depth.max(1),
            runs: HashMap::new(),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Verifies `block` against `owner` and adds it to the run. A block
    /// more than `depth` heights past the run replaces it.
    pub fn insert(&mut self, block: Block, owner: &PublicKey) -> AcceptOutcome {
        if let Err(r) = verify_block(&block, owner) {
            return AcceptOutcome::Rejected(r);
        }
        let depth = self.depth;
        let run = self.runs.entry(block.chain_id).or_default();
        let Some(last) = run.back() else {
            run.push_back(block);
            return AcceptOutcome::Appended;
        };
        let first_height = run.front().map_or(0, |b| b.height);
        if block.height <= last.height {
            if block.height < first_height {
                return AcceptOutcome::Duplicate;
            }
            let existing = &run[(block.height - first_height) as usize];
            if existing.hash == block.hash {
                return AcceptOutcome::Duplicate;
            }
            return match detect_equivocation(existing, &block, owner) {
                Some(e) => AcceptOutcome::Equivocation(Box::new(e)),
                None => AcceptOutcome::Rejected(crate::chaincore::Rejection::BadSignature),
            };
        }
        let expected = last.height + 1;
        if block.height == expected {
            if let Err(r) = validate_successor(last, &block) {
                return AcceptOutcome::Rejected(r);
            }
            run.push_back(block);
            while run.len() > depth {
                run.pop_front();
            }
            return AcceptOutcome::Appended;
        }
        if block.height - last.height > depth as u64 {
            run.clear();
            run.push_back(block);
            return AcceptOutcome::Appended;
        }
        AcceptOutcome::Gap { expected }
    }

    pub fn blocks(&self, chain_id: &ChainId) -> Vec<Block> {
        self.runs
            .get(chain_id)
            .map(|r| r.iter().cloned().collect())
            .unwrap_or_default()
    }

    pub fn heights(&self, chain_id: &ChainId) -> Vec<u64> {
        self.runs
            .get(chain_id)
            .map(|r| r.iter().map(|b| b.height).collect())
            .unwrap_or_default()
    }

    pub fn head(&self, chain_id: &ChainId) -> Option<u64> {
        self.runs.get(chain_id)?.back().map(|b| b.height)
    }

    pub fn clear_chain(&mut self, chain_id: &ChainId) {
        self.runs.remove(chain_id);
    }
}

/// Light-node ledger: owner keys come from the registry, blocks live only
/// in the bounded cache, and history is never served to peers.
#[derive(Debug)]
pub struct LightLedger {
    registry: ChainRegistry,
    cache: LightCache,
    banned: BTreeSet<ChainId>,
}

impl LightLedger {
    pub fn new(registry: ChainRegistry, cache_depth: usize) -> Self {
        Self {
            registry,
            cache: LightCache::new(cache_depth),
            banned: BTreeSet::new(),
        }
    }

    pub fn cache(&self) -> &LightCache {
        &self.cache
    }

    pub fn registry(&self) -> &ChainRegistry {
        &self.registry
    }
}

impl Ledger for LightLedger {
    fn kind(&self) -> NodeKind {
        NodeKind::Light
    }

    fn local_view(&self) -> LocalView {
        let mut v = LocalView::new(NodeKind::Light);
        for id in self.registry.followed_ids() {
            if self.banned.contains(&id) {
                continue;
            }
            if let Some(h) = self.cache.head(&id) {
                v.heads.insert(id, h);
            }
            v.followed.insert(id);
        }
        v
    }

    fn is_relayable(&self, chain_id: &ChainId) -> bool {
        !self.banned.contains(chain_id) && self.registry.status(chain_id) == Some(ChainStatus::Followed)
    }

    fn is_banned(&self, chain_id: &ChainId) -> bool {
        self.banned.contains(chain_id) || self.registry.is_banned(chain_id)
    }

    fn head(&self, chain_id: &ChainId) -> Option<u64> {
        self.cache.head(chain_id)
    }

    fn accept_block(&mut self, block: Block) -> AcceptOutcome {
        if !self.is_relayable(&block.chain_id) {
            return AcceptOutcome::Ignored;
        }
        let Some(owner) = self.registry.owner_of(&block.chain_id) else {
            return AcceptOutcome::Ignored;
        };
        let chain_id = block.chain_id;
        let out = self.cache.insert(block, &owner);
        if matches!(out, AcceptOutcome::Equivocation(_)) {
            self.banned.insert(chain_id);
        }
        out
    }

    fn blocks_for_peer(&self, _chain_id: &ChainId, _from: u64, _to: u64) -> Option<Vec<Block>> {
        None
    }

    fn sync_start(&self, chain_id: &ChainId, peer_head: u64) -> Option<u64> {
        let recent = (peer_head + 1).saturating_sub(self.cache.depth() as u64);
        match self.cache.head(chain_id) {
            Some(h) if h >= peer_head => None,
            Some(h) => Some((h + 1).max(recent)),
            None => Some(recent),
        }
    }
}
