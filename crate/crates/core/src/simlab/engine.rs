use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::Arc;

use super::topology::{LinkParams, NodeId, Topology};
use super::SimError;
use crate::chaincore::{seal_block, Block, BlockDraft, ChainId, Hash256, KeyPair};
use crate::chainstore::{ChainRegistry, ChainStore};
use crate::nodekit::{create_genesis, LightLedger};
use crate::peernet::{AcceptOutcome, Ledger, NodeEvent, PeerConfig, PeerNode, SessionId};
use crate::wire::{encode_message, LocalView, NodeKind, WireMessage};

pub const DEFAULT_LIGHT_CACHE_DEPTH: usize = 64;
/// Virtual wall-clock origin used for block timestamps, in ms.
pub const TIME_BASE_MS: u64 = 1_600_000_000_000;
const NS_PER_MS: u64 = 1_000_000;

/// Ledger of a simulated node.
pub enum SimLedger {
    Full(Arc<ChainStore>),
    Light(LightLedger),
}

impl SimLedger {
    pub fn store(&self) -> Option<&Arc<ChainStore>> {
        match self {
            SimLedger::Full(s) => Some(s),
            SimLedger::Light(_) => None,
        }
    }

    pub fn light(&self) -> Option<&LightLedger> {
        match self {
            SimLedger::Full(_) => None,
            SimLedger::Light(l) => Some(l),
        }
    }

    /// Every block held for `chain_id`, in height order.
    pub fn blocks(&self, chain_id: &ChainId) -> Vec<Block> {
        match self {
            SimLedger::Full(s) => match s.head_height(chain_id) {
                Some(h) => s.get_range(chain_id, 0, h).unwrap_or_default(),
                None => Vec::new(),
            },
            SimLedger::Light(l) => l.cache().blocks(chain_id),
        }
    }

    fn inner(&self) -> &dyn Ledger {
        match self {
            SimLedger::Full(s) => s,
            SimLedger::Light(l) => l,
        }
    }
}

impl Ledger for SimLedger {
    fn kind(&self) -> NodeKind {
        self.inner().kind()
    }
    fn local_view(&self) -> LocalView {
        self.inner().local_view()
    }
    fn is_relayable(&self, chain_id: &ChainId) -> bool {
        self.inner().is_relayable(chain_id)
    }
    fn is_banned(&self, chain_id: &ChainId) -> bool {
        self.inner().is_banned(chain_id)
    }
    fn head(&self, chain_id: &ChainId) -> Option<u64> {
        self.inner().head(chain_id)
    }
    fn accept_block(&mut self, block: Block) -> AcceptOutcome {
        match self {
            SimLedger::Full(s) => s.accept_block(block),
            SimLedger::Light(l) => l.accept_block(block),
        }
    }
    fn blocks_for_peer(&self, chain_id: &ChainId, from: u64, to: u64) -> Option<Vec<Block>> {
        self.inner().blocks_for_peer(chain_id, from, to)
    }
    fn sync_start(&self, chain_id: &ChainId, peer_head: u64) -> Option<u64> {
        self.inner().sync_start(chain_id, peer_head)
    }
}

pub type SimNode = PeerNode<SimLedger>;

/// Bytes a message occupies on a simulated link. Blocks are charged at
/// their binary serialized size; everything else at its JSON frame size.
pub fn wire_size(msg: &WireMessage) -> usize {
    match msg {
        WireMessage::NewBlock { block, .. } => block.serialized_len(),
        WireMessage::Blocks { blocks, .. } => blocks.iter().map(Block::serialized_len).sum::<usize>().max(1),
        other => encode_message(other).len(),
    }
}

/// One frame put on a link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLog {
    /// Engine step that queued the frame.
    pub step: u64,
    pub queued_ns: u64,
    pub sent_ns: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: &'static str,
    /// Hash of the carried block for `new_block`.
    pub block: Option<Hash256>,
    pub bytes: usize,
}

/// One node event with the engine step that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventLog {
    pub step: u64,
    pub at_ns: u64,
    pub node: NodeId,
    pub event: NodeEvent,
}

#[allow(clippy::large_enum_variant)]
enum Action {
    Deliver { from: NodeId, to: NodeId, msg: WireMessage },
    Produce { payload: Vec<u8> },
}

/// Discrete-event network of [`PeerNode`]s. Time is integer nanoseconds;
/// every directed link is a FIFO that clocks out one message at a time,
/// and events at equal times run in scheduling order.
pub struct Simulation {
    topology: Topology,
    adjacency: Vec<BTreeMap<NodeId, LinkParams>>,
    nodes: Vec<SimNode>,
    owner_key: KeyPair,
    now: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<(u64, u64)>>,
    actions: HashMap<u64, Action>,
    link_free: HashMap<(NodeId, NodeId), u64>,
    receipts: BTreeMap<Hash256, Vec<Option<u64>>>,
    produced: Vec<(Block, u64)>,
    frames: Vec<FrameLog>,
    events: Vec<EventLog>,
    processed: u64,
}

impl Simulation {
    /// Builds the nodes; only the owner holds the genesis block.
    pub fn new(topology: Topology, owner_key: KeyPair, light_cache_depth: usize) -> Result<Self, SimError> {
        topology.validate()?;
        let genesis = create_genesis(&owner_key, "sim", TIME_BASE_MS).map_err(|e| SimError::Chain(e.to_string()))?;
        let mut nodes = Vec::with_capacity(topology.len());
        for spec in &topology.nodes {
            let mut registry = ChainRegistry::in_memory();
            registry
                .add_default(owner_key.public_key(), "sim")
                .map_err(|e| SimError::Chain(e.to_string()))?;
            let ledger = match spec.kind {
                NodeKind::Full => SimLedger::Full(Arc::new(ChainStore::in_memory(registry))),
                NodeKind::Light => SimLedger::Light(LightLedger::new(registry, light_cache_depth)),
            };
            nodes.push(PeerNode::new(ledger, PeerConfig::default()));
        }
        let store = nodes[topology.owner]
            .ledger()
            .store()
            .expect("owner is a full node")
            .clone();
        store
            .append_block(&owner_key.chain_id(), genesis)
            .map_err(|e| SimError::Chain(e.to_string()))?;
        Ok(Self {
            adjacency: topology.neighbors(),
            topology,
            nodes,
            owner_key,
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            actions: HashMap::new(),
            link_free: HashMap::new(),
            receipts: BTreeMap::new(),
            produced: Vec::new(),
            frames: Vec::new(),
            events: Vec::new(),
            processed: 0,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn now_ns(&self) -> u64 {
        self.now
    }

    pub fn chain_id(&self) -> ChainId {
        self.owner_key.chain_id()
    }

    pub fn owner_key(&self) -> &KeyPair {
        &self.owner_key
    }

    pub fn node(&self, id: NodeId) -> &SimNode {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut SimNode {
        &mut self.nodes[id]
    }

    pub fn frames(&self) -> &[FrameLog] {
        &self.frames
    }

    pub fn events(&self) -> &[EventLog] {
        &self.events
    }

    /// Blocks produced by the owner with their production time.
    pub fn produced(&self) -> &[(Block, u64)] {
        &self.produced
    }

    /// First time each node accepted `hash`.
    pub fn receipts(&self, hash: &Hash256) -> Option<&[Option<u64>]> {
        self.receipts.get(hash).map(Vec::as_slice)
    }

    /// Opens a session over every link, then runs until the network is
    /// quiet, which also syncs the genesis block everywhere.
    pub fn connect_all(&mut self, max_events: u64) -> Result<(), SimError> {
        let links: Vec<(NodeId, NodeId)> = self.topology.links.iter().map(|l| (l.a, l.b)).collect();
        for (a, b) in links {
            self.nodes[b].open_session(a as SessionId, false);
            self.nodes[a].open_session(b as SessionId, true);
            self.flush(a);
            self.flush(b);
        }
        self.run_until_idle(max_events)
    }

    /// Owner seals the next block with `payload` at `at_ns` and floods it.
    pub fn schedule_block(&mut self, at_ns: u64, payload: Vec<u8>) {
        self.schedule(at_ns, Action::Produce { payload });
    }

    /// Puts `msg` on the link `from -> to` now, bypassing `from`'s logic.
    /// Models a node that sends different data to different peers.
    pub fn inject(&mut self, from: NodeId, to: NodeId, msg: WireMessage) -> Result<(), SimError> {
        if !self.adjacency[from].contains_key(&to) {
            return Err(SimError::BadLink(format!("{from} - {to}")));
        }
        self.transmit(from, to, msg);
        Ok(())
    }

    /// Seals the owner's next block from the current head.
    pub fn seal_next(&self, payload: Vec<u8>) -> Result<Block, SimError> {
        let store = self.nodes[self.topology.owner]
            .ledger()
            .store()
            .expect("owner is a full node");
        let head = store
            .get_head(&self.chain_id())
            .map_err(|e| SimError::Chain(e.to_string()))?
            .ok_or_else(|| SimError::Chain("owner has no genesis".into()))?;
        seal_block(
            BlockDraft {
                chain_id: self.chain_id(),
                height: head.height + 1,
                time: (TIME_BASE_MS + self.now / NS_PER_MS).max(head.time + 1),
                prev_hash: head.hash,
                payload,
            },
            &self.owner_key,
        )
        .map_err(|e| SimError::Chain(e.to_string()))
    }

    /// Processes events until none remain. Fails if more than
    /// `max_events` are processed, which would mean gossip never settles.
    pub fn run_until_idle(&mut self, max_events: u64) -> Result<(), SimError> {
        let start = self.processed;
        while self.step()? {
            if self.processed - start > max_events {
                return Err(SimError::NoQuiescence(max_events));
            }
        }
        Ok(())
    }

    fn step(&mut self) -> Result<bool, SimError> {
        let Some(Reverse((at, seq))) = self.queue.pop() else {
            return Ok(false);
        };
        self.now = at;
        self.processed += 1;
        match self.actions.remove(&seq).expect("scheduled action") {
            Action::Deliver { from, to, msg } => {
                self.nodes[to].handle(from as SessionId, msg);
                self.flush(to);
            }
            Action::Produce { payload } => {
                let block = self.seal_next(payload)?;
                let owner = self.topology.owner;
                self.produced.push((block.clone(), self.now));
                self.nodes[owner].publish_block(block);
                self.flush(owner);
            }
        }
        Ok(true)
    }

    fn schedule(&mut self, at: u64, action: Action) {
        let seq = self.seq;
        self.seq += 1;
        self.actions.insert(seq, action);
        self.queue.push(Reverse((at, seq)));
    }

    fn transmit(&mut self, from: NodeId, to: NodeId, msg: WireMessage) {
        let Some(params) = self.adjacency[from].get(&to).copied() else {
            return;
        };
        let bytes = wire_size(&msg);
        let free = self.link_free.entry((from, to)).or_insert(0);
        let start = (*free).max(self.now);
        let done = start + params.serialization_ns(bytes);
        *free = done;
        self.frames.push(FrameLog {
            step: self.processed,
            queued_ns: self.now,
            sent_ns: start,
            from,
            to,
            kind: msg.type_name(),
            block: match &msg {
                WireMessage::NewBlock { block, .. } => Some(block.hash),
                _ => None,
            },
            bytes,
        });
        self.schedule(done + params.latency_ns(), Action::Deliver { from, to, msg });
    }

    fn flush(&mut self, id: NodeId) {
        for (to, msg) in self.nodes[id].take_outbox() {
            self.transmit(id, to as NodeId, msg);
        }
        for ev in self.nodes[id].take_events() {
            match &ev {
                NodeEvent::BlockAccepted { hash, .. } => {
                    let n = self.nodes.len();
                    let slot = &mut self.receipts.entry(*hash).or_insert_with(|| vec![None; n])[id];
                    slot.get_or_insert(self.now);
                }
                NodeEvent::Disconnect { session, .. } => {
                    let peer = *session as NodeId;
                    self.nodes[id].close_session(*session);
                    self.nodes[peer].close_session(id as SessionId);
                }
                _ => {}
            }
            self.events.push(EventLog {
                step: self.processed,
                at_ns: self.now,
                node: id,
                event: ev,
            });
        }
    }
}
