use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use tracing::warn;

use super::log::{header_len, read_log, LogWriter};
use super::registry::{ChainRegistry, ChainRegistryEntry, ChainStatus};
use super::{Projection, StoreError};
use crate::chaincore::{
    detect_equivocation, genesis_owner, golden, validate_genesis, validate_successor, verify_block, Block, ChainId,
    EquivocationEvidence, Hash256, PublicKey, Rejection,
};

const CHAINS_DIR: &str = "chains";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppendOutcome {
    Appended,
    /// The identical block is already stored at that height.
    Duplicate,
}

pub type AppendHook = Box<dyn Fn(&Block) + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportReport {
    pub chain_id: ChainId,
    pub appended: usize,
    pub duplicates: usize,
}

#[derive(Default)]
struct ChainData {
    blocks: Vec<Block>,
    by_hash: HashMap<Hash256, u64>,
}

struct ChainSlot {
    /// Serializes appends to this chain; also owns the log handle.
    writer: Mutex<Option<LogWriter>>,
    data: RwLock<ChainData>,
}

/// Append-only multi-chain block store.
///
/// Appends to one chain are serialized; readers take a short read lock and
/// always observe a contiguous prefix. There is deliberately no API that
/// removes a stored block.
pub struct ChainStore {
    root: Option<PathBuf>,
    registry: RwLock<ChainRegistry>,
    chains: RwLock<HashMap<ChainId, Arc<ChainSlot>>>,
    hooks: RwLock<Vec<AppendHook>>,
}

impl ChainStore {
    pub fn in_memory(registry: ChainRegistry) -> Self {
        Self {
            root: None,
            registry: RwLock::new(registry),
            chains: RwLock::new(HashMap::new()),
            hooks: RwLock::new(Vec::new()),
        }
    }

    /// Opens a store rooted at `root`, replaying and re-validating every
    /// chain log. Invalid or torn tails are truncated.
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(root.join(CHAINS_DIR))?;
        let registry = ChainRegistry::open(root)?;
        let store = Self {
            root: Some(root.to_path_buf()),
            registry: RwLock::new(registry),
            chains: RwLock::new(HashMap::new()),
            hooks: RwLock::new(Vec::new()),
        };
        for entry in fs::read_dir(root.join(CHAINS_DIR))? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("log") {
                continue;
            }
            let Some(id) = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| ChainId::from_hex(s).ok())
            else {
                continue;
            };
            store.load_chain(id, &path)?;
        }
        Ok(store)
    }

    fn load_chain(&self, id: ChainId, path: &Path) -> Result<(), StoreError> {
        let contents = read_log(path)?;
        let owner = self.registry.read().owner_of(&id).or_else(|| {
            contents
                .blocks
                .first()
                .and_then(|(b, _)| genesis_owner(b).ok().map(|o| o.0))
        });
        let mut data = ChainData::default();
        let mut valid_len = header_len();
        let mut truncated = contents.torn_tail;
        for (block, end) in contents.blocks {
            let ok = owner.is_some_and(|o| {
                verify_block(&block, &o).is_ok()
                    && match data.blocks.last() {
                        None => validate_genesis(&block, &o).is_ok(),
                        Some(prev) => validate_successor(prev, &block).is_ok(),
                    }
            });
            if !ok {
                truncated = true;
                break;
            }
            data.by_hash.insert(block.hash, block.height);
            data.blocks.push(block);
            valid_len = end;
        }
        if truncated {
            warn!(chain = %id, kept = data.blocks.len(), "truncating damaged chain log");
        }
        let writer = LogWriter::open(path, Some(valid_len))?;
        self.chains.write().insert(
            id,
            Arc::new(ChainSlot {
                writer: Mutex::new(Some(writer)),
                data: RwLock::new(data),
            }),
        );
        Ok(())
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// Path of a chain's log file, for file-based stores.
    pub fn log_path(&self, chain_id: &ChainId) -> Option<PathBuf> {
        self.root
            .as_ref()
            .map(|r| r.join(CHAINS_DIR).join(format!("{chain_id}.log")))
    }

    pub fn registry(&self) -> parking_lot::RwLockReadGuard<'_, ChainRegistry> {
        self.registry.read()
    }

    pub fn follow_chain(&self, chain_id: ChainId, owner: &PublicKey, label: &str) -> Result<(), StoreError> {
        self.registry.write().follow(chain_id, owner, label)
    }

    pub fn drop_chain(&self, chain_id: &ChainId) -> Result<(), StoreError> {
        self.registry.write().drop_chain(chain_id)
    }

    pub fn list_chains(&self, filter: Option<ChainStatus>) -> Vec<ChainRegistryEntry> {
        self.registry.read().list(filter)
    }

    pub fn load_default_list(&self, text: &str) -> Result<(), StoreError> {
        self.registry.write().load_default_list(text)
    }

    pub fn add_default(&self, owner: &PublicKey, label: &str) -> Result<ChainId, StoreError> {
        self.registry.write().add_default(owner, label)
    }

    /// Registers a callback fired after every successful append, in append
    /// order for each chain.
    pub fn on_append(&self, hook: AppendHook) {
        self.hooks.write().push(hook);
    }

    fn slot(&self, chain_id: &ChainId) -> Option<Arc<ChainSlot>> {
        self.chains.read().get(chain_id).cloned()
    }

    fn slot_or_create(&self, chain_id: &ChainId) -> Result<Arc<ChainSlot>, StoreError> {
        if let Some(s) = self.slot(chain_id) {
            return Ok(s);
        }
        let mut chains = self.chains.write();
        if let Some(s) = chains.get(chain_id) {
            return Ok(s.clone());
        }
        let writer = match self.log_path(chain_id) {
            Some(p) => Some(LogWriter::open(&p, None)?),
            None => None,
        };
        let slot = Arc::new(ChainSlot {
            writer: Mutex::new(writer),
            data: RwLock::new(ChainData::default()),
        });
        chains.insert(*chain_id, slot.clone());
        Ok(slot)
    }

    /// Owner key of a chain the node currently accepts blocks for.
    fn accepting_owner(&self, chain_id: &ChainId) -> Result<PublicKey, StoreError> {
        let reg = self.registry.read();
        let entry = reg.entry(chain_id).ok_or(StoreError::UnknownChain(*chain_id))?;
        match entry.status {
            ChainStatus::Banned => Err(StoreError::ChainBanned(*chain_id)),
            ChainStatus::Dropped => Err(StoreError::NotFollowed(*chain_id)),
            ChainStatus::Followed => Ok(entry.owner),
        }
    }

    pub fn append_block(&self, chain_id: &ChainId, block: Block) -> Result<AppendOutcome, StoreError> {
        let owner = self.accepting_owner(chain_id)?;
        if &block.chain_id != chain_id {
            return Err(StoreError::Rejected(Rejection::BadChainId));
        }
        verify_block(&block, &owner).map_err(StoreError::Rejected)?;
        let slot = self.slot_or_create(chain_id)?;
        let mut writer = slot.writer.lock();
        let next = slot.data.read().blocks.len() as u64;
        if block.height < next {
            let existing = slot.data.read().blocks[block.height as usize].clone();
            if existing.hash == block.hash {
                return Ok(AppendOutcome::Duplicate);
            }
            let evidence =
                detect_equivocation(&existing, &block, &owner).ok_or(StoreError::Rejected(Rejection::BadSignature))?;
            drop(writer);
            self.record_equivocation(evidence.clone())?;
            return Err(StoreError::Equivocation(Box::new(evidence)));
        }
        if block.height > next {
            return Err(StoreError::Gap {
                expected: next,
                got: block.height,
            });
        }
        {
            let data = slot.data.read();
            match data.blocks.last() {
                None => validate_genesis(&block, &owner),
                Some(prev) => validate_successor(prev, &block),
            }
            .map_err(StoreError::Rejected)?;
        }
        if let Some(w) = writer.as_mut() {
            w.append(&block)?;
        }
        {
            let mut data = slot.data.write();
            data.by_hash.insert(block.hash, block.height);
            data.blocks.push(block);
        }
        let data = slot.data.read();
        let stored = data.blocks.last().expect("just appended");
        for hook in self.hooks.read().iter() {
            hook(stored);
        }
        Ok(AppendOutcome::Appended)
    }

    /// Bans the chain after checking `evidence` against the registered
    /// owner key. Stored blocks stay readable.
    pub fn record_equivocation(&self, evidence: EquivocationEvidence) -> Result<(), StoreError> {
        let chain_id = *evidence.chain_id();
        let owner = self
            .registry
            .read()
            .owner_of(&chain_id)
            .ok_or(StoreError::UnknownChain(chain_id))?;
        if !evidence.verify(&owner) {
            return Err(StoreError::InvalidEvidence);
        }
        warn!(chain = %chain_id, height = evidence.height(), "owner equivocated; banning chain");
        self.registry.write().ban(evidence)
    }

    fn known(&self, chain_id: &ChainId) -> Result<Option<Arc<ChainSlot>>, StoreError> {
        let slot = self.slot(chain_id);
        if slot.is_none() && self.registry.read().entry(chain_id).is_none() {
            return Err(StoreError::UnknownChain(*chain_id));
        }
        Ok(slot)
    }

    pub fn get_block(&self, chain_id: &ChainId, height: u64) -> Result<Option<Block>, StoreError> {
        Ok(self
            .known(chain_id)?
            .and_then(|s| s.data.read().blocks.get(height as usize).cloned()))
    }

    pub fn get_block_by_hash(&self, chain_id: &ChainId, hash: &Hash256) -> Option<Block> {
        let slot = self.slot(chain_id)?;
        let data = slot.data.read();
        let h = *data.by_hash.get(hash)?;
        data.blocks.get(h as usize).cloned()
    }

    pub fn get_head(&self, chain_id: &ChainId) -> Result<Option<Block>, StoreError> {
        Ok(self.known(chain_id)?.and_then(|s| s.data.read().blocks.last().cloned()))
    }

    pub fn head_height(&self, chain_id: &ChainId) -> Option<u64> {
        let slot = self.slot(chain_id)?;
        let n = slot.data.read().blocks.len() as u64;
        n.checked_sub(1)
    }

    /// Stored blocks with heights in `[from, to]`, clamped to what exists.
    pub fn get_range(&self, chain_id: &ChainId, from: u64, to: u64) -> Result<Vec<Block>, StoreError> {
        let Some(slot) = self.known(chain_id)? else {
            return Ok(Vec::new());
        };
        if to < from {
            return Ok(Vec::new());
        }
        let data = slot.data.read();
        let len = data.blocks.len() as u64;
        if from >= len {
            return Ok(Vec::new());
        }
        let end = to.min(len - 1);
        Ok(data.blocks[from as usize..=end as usize].to_vec())
    }

    /// Heads of all chains with at least one stored block.
    pub fn chain_heads(&self) -> Vec<(ChainId, u64)> {
        let mut out: Vec<(ChainId, u64)> = self
            .chains
            .read()
            .iter()
            .filter_map(|(id, s)| (s.data.read().blocks.len() as u64).checked_sub(1).map(|h| (*id, h)))
            .collect();
        out.sort();
        out
    }

    /// Feeds every stored block, in height order, to `projection`.
    pub fn replay<P: Projection>(&self, chain_id: &ChainId, projection: &P) -> P::State {
        let mut state = projection.initial();
        if let Some(slot) = self.slot(chain_id) {
            for b in slot.data.read().blocks.iter() {
                projection.apply(&mut state, b);
            }
        }
        state
    }

    /// Re-verifies a stored chain end to end; returns every violation.
    pub fn verify_chain(&self, chain_id: &ChainId) -> Vec<(u64, Rejection)> {
        let Some(owner) = self.registry.read().owner_of(chain_id) else {
            return Vec::new();
        };
        let Some(slot) = self.slot(chain_id) else {
            return Vec::new();
        };
        let data = slot.data.read();
        let mut out = Vec::new();
        for (i, b) in data.blocks.iter().enumerate() {
            if let Err(r) = verify_block(b, &owner) {
                out.push((b.height, r));
            }
            let link = if i == 0 {
                validate_genesis(b, &owner)
            } else {
                validate_successor(&data.blocks[i - 1], b)
            };
            if let Err(r) = link {
                out.push((b.height, r));
            }
        }
        out
    }

    pub fn export_chain(&self, chain_id: &ChainId, path: &Path) -> Result<usize, StoreError> {
        let blocks = self.get_range(chain_id, 0, u64::MAX)?;
        golden::write_file(path, &blocks)?;
        Ok(blocks.len())
    }

    /// Imports a golden-vector hex file. The owner key comes from the
    /// registry or, for an unknown chain, from the genesis block, in which
    /// case the chain is followed as a user-added entry.
    pub fn import_chain(&self, path: &Path) -> Result<ImportReport, StoreError> {
        let blocks = golden::read_file(path)?;
        let first = blocks
            .first()
            .ok_or_else(|| StoreError::Corrupt("empty chain file".into()))?;
        let chain_id = first.chain_id;
        if self.registry.read().entry(&chain_id).is_none() {
            if first.height != 0 {
                return Err(StoreError::UnknownChain(chain_id));
            }
            let (owner, label) = genesis_owner(first).map_err(|_| StoreError::Rejected(Rejection::BadGenesis))?;
            let label = sanitize_label(&label);
            self.follow_chain(chain_id, &owner, &label)?;
        }
        let mut report = ImportReport {
            chain_id,
            appended: 0,
            duplicates: 0,
        };
        for b in blocks {
            match self.append_block(&chain_id, b)? {
                AppendOutcome::Appended => report.appended += 1,
                AppendOutcome::Duplicate => report.duplicates += 1,
            }
        }
        Ok(report)
    }
}

fn sanitize_label(label: &str) -> String {
    let cleaned: String = label
        .chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .take(64)
        .collect();
    if cleaned.is_empty() {
        "imported".to_string()
    } else {
        cleaned
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaincore::{generate_keypair, genesis_payload, seal_block, BlockDraft, KeyPair};

    fn owner() -> KeyPair {
        generate_keypair(Some([0x11; 32])).unwrap()
    }

    fn chain(k: &KeyPair, n: usize) -> Vec<Block> {
        let mut out: Vec<Block> = Vec::new();
        for h in 0..n as u64 {
            let (prev_hash, payload) = match out.last() {
                None => (Hash256::ZERO, genesis_payload(k.public_key(), "t")),
                Some(p) => (p.hash, format!("block {h}").into_bytes()),
            };
            out.push(
                seal_block(
                    BlockDraft {
                        chain_id: k.chain_id(),
                        height: h,
                        time: 1000 + h,
                        prev_hash,
                        payload,
                    },
                    k,
                )
                .unwrap(),
            );
        }
        out
    }

    fn store_with(k: &KeyPair) -> ChainStore {
        let mut reg = ChainRegistry::in_memory();
        reg.add_default(k.public_key(), "t").unwrap();
        ChainStore::in_memory(reg)
    }

    #[test]
    fn genesis_then_child() {
        let k = owner();
        let s = store_with(&k);
        let id = k.chain_id();
        assert!(s.get_head(&id).unwrap().is_none());
        let blocks = chain(&k, 2);
        for b in &blocks {
            assert_eq!(s.append_block(&id, b.clone()).unwrap(), AppendOutcome::Appended);
        }
        assert_eq!(s.get_head(&id).unwrap().unwrap(), blocks[1]);
        assert_eq!(
            s.append_block(&id, blocks[1].clone()).unwrap(),
            AppendOutcome::Duplicate
        );
        assert_eq!(s.head_height(&id), Some(1));
    }

    #[test]
    fn range_is_clamped() {
        let k = owner();
        let s = store_with(&k);
        let id = k.chain_id();
        for b in chain(&k, 10) {
            s.append_block(&id, b).unwrap();
        }
        let r: Vec<u64> = s.get_range(&id, 3, 5).unwrap().iter().map(|b| b.height).collect();
        assert_eq!(r, vec![3, 4, 5]);
        let r: Vec<u64> = s.get_range(&id, 8, 20).unwrap().iter().map(|b| b.height).collect();
        assert_eq!(r, vec![8, 9]);
        assert!(matches!(
            s.get_range(&ChainId([3; 32]), 0, 1),
            Err(StoreError::UnknownChain(_))
        ));
    }

    #[test]
    fn gap_is_reported() {
        let k = owner();
        let s = store_with(&k);
        let id = k.chain_id();
        let blocks = chain(&k, 3);
        s.append_block(&id, blocks[0].clone()).unwrap();
        assert!(matches!(
            s.append_block(&id, blocks[2].clone()),
            Err(StoreError::Gap { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn equivocation_bans_and_preserves_history() {
        let k = owner();
        let s = store_with(&k);
        let id = k.chain_id();
        let blocks = chain(&k, 3);
        for b in &blocks {
            s.append_block(&id, b.clone()).unwrap();
        }
        let fork = seal_block(
            BlockDraft {
                chain_id: id,
                height: 2,
                time: 5000,
                prev_hash: blocks[1].hash,
                payload: b"other".to_vec(),
            },
            &k,
        )
        .unwrap();
        assert!(matches!(s.append_block(&id, fork), Err(StoreError::Equivocation(_))));
        assert_eq!(s.registry().status(&id), Some(ChainStatus::Banned));
        assert!(s.registry().entry(&id).unwrap().ban_evidence.is_some());
        assert_eq!(s.get_range(&id, 0, 10).unwrap(), blocks);
        let next = chain(&k, 4).pop().unwrap();
        assert!(matches!(s.append_block(&id, next), Err(StoreError::ChainBanned(_))));
    }

    #[test]
    fn forged_evidence_is_invalid() {
        let k = owner();
        let s = store_with(&k);
        let blocks = chain(&k, 2);
        let mut forged = blocks[1].clone();
        forged.payload = b"forged".to_vec();
        forged.hash = forged.compute_hash().unwrap();
        let ev = EquivocationEvidence {
            block_a: blocks[1].clone(),
            block_b: forged,
        };
        assert!(matches!(s.record_equivocation(ev), Err(StoreError::InvalidEvidence)));
    }

    #[test]
    fn dropped_chain_refuses_blocks() {
        let k = owner();
        let s = store_with(&k);
        s.drop_chain(&k.chain_id()).unwrap();
        assert!(matches!(
            s.append_block(&k.chain_id(), chain(&k, 1).remove(0)),
            Err(StoreError::NotFollowed(_))
        ));
    }

    #[test]
    fn reopen_restores_chain_and_ban() {
        let dir = tempfile::tempdir().unwrap();
        let k = owner();
        let id = k.chain_id();
        let blocks = chain(&k, 5);
        {
            let s = ChainStore::open(dir.path()).unwrap();
            s.follow_chain(id, k.public_key(), "t").unwrap();
            for b in &blocks {
                s.append_block(&id, b.clone()).unwrap();
            }
            let mut fork = chain(&k, 5).pop().unwrap();
            fork.time += 1;
            let fork = seal_block(
                BlockDraft {
                    chain_id: id,
                    height: fork.height,
                    time: fork.time,
                    prev_hash: fork.prev_hash,
                    payload: fork.payload,
                },
                &k,
            )
            .unwrap();
            assert!(s.append_block(&id, fork).is_err());
        }
        let s = ChainStore::open(dir.path()).unwrap();
        assert_eq!(s.get_range(&id, 0, 99).unwrap(), blocks);
        assert_eq!(s.registry().status(&id), Some(ChainStatus::Banned));
        assert!(s.verify_chain(&id).is_empty());
    }

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let k = owner();
        let id = k.chain_id();
        let blocks = chain(&k, 4);
        let path;
        {
            let s = ChainStore::open(dir.path()).unwrap();
            s.follow_chain(id, k.public_key(), "t").unwrap();
            for b in &blocks {
                s.append_block(&id, b.clone()).unwrap();
            }
            path = s.log_path(&id).unwrap();
        }
        let full = fs::read(&path).unwrap();
        // Cut the last record in half.
        fs::write(&path, &full[..full.len() - 20]).unwrap();
        let s = ChainStore::open(dir.path()).unwrap();
        assert_eq!(s.get_range(&id, 0, 99).unwrap(), blocks[..3].to_vec());
        // Appending again works after truncation.
        s.append_block(&id, blocks[3].clone()).unwrap();
        drop(s);
        let s = ChainStore::open(dir.path()).unwrap();
        assert_eq!(s.get_range(&id, 0, 99).unwrap(), blocks);
    }

    #[test]
    fn export_import_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let k = owner();
        let id = k.chain_id();
        let s = store_with(&k);
        for b in chain(&k, 6) {
            s.append_block(&id, b).unwrap();
        }
        let file = dir.path().join("chain.hex");
        assert_eq!(s.export_chain(&id, &file).unwrap(), 6);
        let fresh = ChainStore::in_memory(ChainRegistry::in_memory());
        let report = fresh.import_chain(&file).unwrap();
        assert_eq!(report.appended, 6);
        assert_eq!(fresh.get_range(&id, 0, 99).unwrap(), s.get_range(&id, 0, 99).unwrap());
        let again = fresh.import_chain(&file).unwrap();
        assert_eq!(again.duplicates, 6);
    }

    #[test]
    fn hooks_fire_in_order() {
        let k = owner();
        let s = store_with(&k);
        let seen = Arc::new(Mutex::new(Vec::new()));
        let sink = seen.clone();
        s.on_append(Box::new(move |b| sink.lock().push(b.height)));
        for b in chain(&k, 3) {
            s.append_block(&k.chain_id(), b).unwrap();
        }
        assert_eq!(*seen.lock(), vec![0, 1, 2]);
    }
}
