use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use tracing::{debug, warn};

use super::{AcceptOutcome, Ledger, RecordPool, SeenSet};
use crate::apps::{decode_payload_lenient, ChainRecord, RecordVerifier};
use crate::chaincore::{Block, ChainId, Hash256};
use crate::chainstore::ReorderBuffer;
use crate::wire::{chunk_blocks, Hello, NetAddress, RecordSlot, SessionInfo, WireMessage};

pub type SessionId = u64;

#[derive(Debug, Clone)]
pub struct PeerConfig {
    pub sync_window: u64,
    pub seen_capacity: usize,
    pub record_seen_capacity: usize,
    pub pool_bytes: usize,
    pub reorder_capacity: usize,
    pub min_peers: usize,
    /// Protocol violations tolerated on one session before asking the
    /// transport to drop it.
    pub max_penalties: u32,
}

impl Default for PeerConfig {
    fn default() -> Self {
        Self {
            sync_window: 64,
            seen_capacity: SeenSet::DEFAULT_CAPACITY,
            record_seen_capacity: 1 << 16,
            pool_bytes: RecordPool::DEFAULT_CAPACITY_BYTES,
            reorder_capacity: 256,
            min_peers: 3,
            max_penalties: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeEvent {
    SessionOpened {
        session: SessionId,
        info: SessionInfo,
    },
    HandshakeFailed {
        session: SessionId,
        reason: String,
    },
    BlockAccepted {
        chain_id: ChainId,
        height: u64,
        hash: Hash256,
        origin: Option<SessionId>,
    },
    ChainBanned {
        chain_id: ChainId,
        height: u64,
    },
    SyncFinished {
        session: SessionId,
        chain_id: ChainId,
        applied: u64,
        aborted: bool,
    },
    Penalized {
        session: SessionId,
        reason: String,
    },
    /// The transport should close this session.
    Disconnect {
        session: SessionId,
        reason: String,
    },
    PeersLearned {
        session: SessionId,
        addresses: Vec<NetAddress>,
    },
    RecordsAccepted {
        chain_id: ChainId,
        count: usize,
    },
    PeerError {
        session: SessionId,
        code: String,
        detail: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubmitReport {
    pub accepted: usize,
    pub duplicates: usize,
    /// Batch index and error code of each rejected record.
    pub rejected: Vec<(usize, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SessionState {
    AwaitingHello,
    AwaitingAck,
    Open,
}

#[derive(Debug)]
struct Session {
    state: SessionState,
    peer_heads: BTreeMap<ChainId, u64>,
    penalties: u32,
}

#[derive(Debug, Clone, Copy)]
struct SyncState {
    peer: SessionId,
    window_end: u64,
    target: u64,
    applied: u64,
}

/// Sans-I/O peer protocol engine. Feed it frames with [`PeerNode::handle`]
/// and collect results with [`PeerNode::take_outbox`] and
/// [`PeerNode::take_events`].
pub struct PeerNode<L: Ledger> {
    ledger: L,
    config: PeerConfig,
    sessions: BTreeMap<SessionId, Session>,
    seen: SeenSet,
    record_seen: SeenSet,
    pool: RecordPool,
    reorder: ReorderBuffer<Option<SessionId>>,
    syncs: HashMap<ChainId, SyncState>,
    verifier: Arc<RecordVerifier>,
    advertised: Vec<NetAddress>,
    outbox: Vec<(SessionId, WireMessage)>,
    events: Vec<NodeEvent>,
}

impl<L: Ledger> PeerNode<L> {
    pub fn new(ledger: L, config: PeerConfig) -> Self {
        Self {
            seen: SeenSet::new(config.seen_capacity),
            record_seen: SeenSet::new(config.record_seen_capacity),
            pool: RecordPool::new(config.pool_bytes),
            reorder: ReorderBuffer::new(config.reorder_capacity),
            ledger,
            config,
            sessions: BTreeMap::new(),
            syncs: HashMap::new(),
            verifier: Arc::new(RecordVerifier::default()),
            advertised: Vec::new(),
            outbox: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn with_verifier(mut self, verifier: Arc<RecordVerifier>) -> Self {
        self.verifier = verifier;
        self
    }

    pub fn ledger(&self) -> &L {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut L {
        &mut self.ledger
    }

    pub fn config(&self) -> &PeerConfig {
        &self.config
    }

    pub fn verifier(&self) -> &Arc<RecordVerifier> {
        &self.verifier
    }

    pub fn pool(&self) -> &RecordPool {
        &self.pool
    }

    pub fn pool_mut(&mut self) -> &mut RecordPool {
        &mut self.pool
    }

    /// Addresses returned to peers asking `get_peers`.
    pub fn set_advertised(&mut self, addresses: Vec<NetAddress>) {
        self.advertised = addresses;
    }

    pub fn open_sessions(&self) -> Vec<SessionId> {
        self.sessions
            .iter()
            .filter(|(_, s)| s.state == SessionState::Open)
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn is_syncing(&self, chain_id: &ChainId) -> bool {
        self.syncs.contains_key(chain_id)
    }

    pub fn has_seen(&mut self, hash: &Hash256) -> bool {
        self.seen.contains(hash)
    }

    pub fn take_outbox(&mut self) -> Vec<(SessionId, WireMessage)> {
        std::mem::take(&mut self.outbox)
    }

    pub fn take_events(&mut self) -> Vec<NodeEvent> {
        std::mem::take(&mut self.events)
    }

    fn send(&mut self, to: SessionId, msg: WireMessage) {
        self.outbox.push((to, msg));
    }

    /// Registers a transport connection. The dialing side sends `hello`.
    pub fn open_session(&mut self, id: SessionId, outbound: bool) {
        let state = if outbound {
            SessionState::AwaitingAck
        } else {
            SessionState::AwaitingHello
        };
        self.sessions.insert(
            id,
            Session {
                state,
                peer_heads: BTreeMap::new(),
                penalties: 0,
            },
        );
        if outbound {
            let hello = self.ledger.local_view().initiate();
            self.send(id, hello);
        }
    }

    pub fn close_session(&mut self, id: SessionId) {
        self.sessions.remove(&id);
        let stalled: Vec<ChainId> = self
            .syncs
            .iter()
            .filter(|(_, s)| s.peer == id)
            .map(|(c, _)| *c)
            .collect();
        for chain_id in stalled {
            self.finish_sync(&chain_id, true);
        }
    }

    pub fn handle(&mut self, from: SessionId, msg: WireMessage) {
        let Some(state) = self.sessions.get(&from).map(|s| s.state) else {
            debug!(session = from, "frame for unknown session");
            return;
        };
        match msg {
            WireMessage::Hello(hello) => self.on_hello(from, &hello),
            WireMessage::HelloAck(hello) => {
                if state != SessionState::AwaitingAck {
                    self.penalize(from, "unexpected hello_ack");
                    return;
                }
                let result = self.ledger.local_view().complete(&WireMessage::HelloAck(hello));
                match result {
                    Ok(info) => self.session_opened(from, info),
                    Err(e) => self.handshake_failed(from, e.to_string()),
                }
            }
            WireMessage::Error { code, detail } => {
                if state != SessionState::Open {
                    self.handshake_failed(from, format!("{code}: {detail}"));
                    return;
                }
                let aborted: Vec<ChainId> = self
                    .syncs
                    .iter()
                    .filter(|(_, s)| s.peer == from)
                    .map(|(c, _)| *c)
                    .collect();
                for chain_id in aborted {
                    self.finish_sync(&chain_id, true);
                }
                self.events.push(NodeEvent::PeerError {
                    session: from,
                    code,
                    detail,
                });
            }
            _ if state != SessionState::Open => {
                self.send(from, WireMessage::error("unexpected", "handshake not complete"));
                self.penalize(from, "frame before handshake");
            }
            WireMessage::GetPeers => {
                let addresses = self.advertised.clone();
                self.send(from, WireMessage::Peers { addresses });
            }
            WireMessage::Peers { addresses } => self.events.push(NodeEvent::PeersLearned {
                session: from,
                addresses,
            }),
            WireMessage::GetBlocks { chain_id, from: lo, to } => match self.ledger.blocks_for_peer(&chain_id, lo, to) {
                None => self.send(
                    from,
                    WireMessage::error("not-served", "this node does not serve history"),
                ),
                Some(blocks) if blocks.is_empty() => self.send(
                    from,
                    WireMessage::Blocks {
                        chain_id,
                        blocks: Vec::new(),
                    },
                ),
                Some(blocks) => {
                    for m in chunk_blocks(chain_id, blocks) {
                        self.send(from, m);
                    }
                }
            },
            WireMessage::Blocks { chain_id, blocks } => self.on_blocks(from, chain_id, blocks),
            WireMessage::NewBlock { chain_id, block } => {
                if block.chain_id != chain_id {
                    self.penalize(from, "bad-chain-id");
                    return;
                }
                self.note_peer_head(from, chain_id, block.height);
                self.receive_block(Some(from), block);
            }
            WireMessage::SubmitRecords { chain_id, records } => {
                self.submit_records(Some(from), chain_id, records);
            }
        }
    }

    fn on_hello(&mut self, from: SessionId, hello: &Hello) {
        match self.ledger.local_view().respond(hello) {
            Ok((ack, info)) => {
                self.send(from, ack);
                self.session_opened(from, info);
            }
            Err(e) => {
                self.send(from, e.to_message());
                self.handshake_failed(from, e.to_string());
            }
        }
    }

    fn handshake_failed(&mut self, session: SessionId, reason: String) {
        self.sessions.remove(&session);
        self.events.push(NodeEvent::HandshakeFailed {
            session,
            reason: reason.clone(),
        });
        self.events.push(NodeEvent::Disconnect { session, reason });
    }

    fn session_opened(&mut self, id: SessionId, info: SessionInfo) {
        if let Some(s) = self.sessions.get_mut(&id) {
            s.state = SessionState::Open;
            s.peer_heads = info.peer_heads.clone();
        }
        for c in &info.sync_candidates {
            if let Some(from) = self.ledger.sync_start(&c.chain_id, c.peer_head) {
                self.start_sync(id, c.chain_id, from, c.peer_head);
            }
        }
        if self.open_sessions().len() < self.config.min_peers {
            self.send(id, WireMessage::GetPeers);
        }
        self.events.push(NodeEvent::SessionOpened { session: id, info });
    }

    fn note_peer_head(&mut self, session: SessionId, chain_id: ChainId, height: u64) {
        if let Some(s) = self.sessions.get_mut(&session) {
            let h = s.peer_heads.entry(chain_id).or_insert(height);
            *h = (*h).max(height);
        }
    }

    fn penalize(&mut self, session: SessionId, reason: &str) {
        let Some(s) = self.sessions.get_mut(&session) else {
            return;
        };
        s.penalties += 1;
        let exceeded = s.penalties >= self.config.max_penalties;
        self.events.push(NodeEvent::Penalized {
            session,
            reason: reason.to_string(),
        });
        if exceeded {
            self.events.push(NodeEvent::Disconnect {
                session,
                reason: "too many protocol violations".into(),
            });
        }
    }

    /// Introduces a block produced locally and floods it to every session.
    pub fn publish_block(&mut self, block: Block) -> AcceptOutcome {
        self.receive_block(None, block)
    }

    /// Gossip entry point: dedup, validate, store, relay, then flush any
    /// buffered successors.
    pub fn receive_block(&mut self, origin: Option<SessionId>, block: Block) -> AcceptOutcome {
        if self.seen.contains(&block.hash) {
            return AcceptOutcome::Duplicate;
        }
        let chain_id = block.chain_id;
        let outcome = self.accept(origin, block);
        if outcome == AcceptOutcome::Appended {
            self.drain_reorder(&chain_id);
        }
        outcome
    }

    fn prune_pool(&mut self, block: &Block) {
        if self.pool.chain_len(&block.chain_id) == 0 {
            return;
        }
        let Ok(records) = decode_payload_lenient(&block.payload) else {
            return;
        };
        let sealed: HashSet<Hash256> = records.iter().flatten().map(ChainRecord::dedup_key).collect();
        self.pool.remove_sealed(&block.chain_id, &sealed);
    }

    fn accept(&mut self, origin: Option<SessionId>, block: Block) -> AcceptOutcome {
        let chain_id = block.chain_id;
        if !self.ledger.is_relayable(&chain_id) {
            return AcceptOutcome::Ignored;
        }
        let outcome = self.ledger.accept_block(block.clone());
        match &outcome {
            AcceptOutcome::Appended => {
                self.seen.insert(block.hash);
                self.prune_pool(&block);
                self.events.push(NodeEvent::BlockAccepted {
                    chain_id,
                    height: block.height,
                    hash: block.hash,
                    origin,
                });
                let targets: Vec<SessionId> = self
                    .open_sessions()
                    .into_iter()
                    .filter(|s| Some(*s) != origin)
                    .collect();
                for s in targets {
                    self.send(
                        s,
                        WireMessage::NewBlock {
                            chain_id,
                            block: block.clone(),
                        },
                    );
                }
            }
            AcceptOutcome::Duplicate => {
                self.seen.insert(block.hash);
            }
            AcceptOutcome::Gap { expected } => {
                self.seen.insert(block.hash);
                let expected = *expected;
                let height = block.height;
                self.reorder.insert(block, origin);
                if let Some(peer) = origin {
                    if !self.syncs.contains_key(&chain_id) {
                        self.start_sync(peer, chain_id, expected, height.saturating_sub(1));
                    }
                }
            }
            AcceptOutcome::Equivocation(evidence) => {
                self.seen.insert(block.hash);
                self.reorder.clear_chain(&chain_id);
                self.syncs.remove(&chain_id);
                warn!(chain = %chain_id, height = evidence.height(), "chain banned");
                self.events.push(NodeEvent::ChainBanned {
                    chain_id,
                    height: evidence.height(),
                });
            }
            AcceptOutcome::Rejected(r) => {
                if let Some(peer) = origin {
                    self.penalize(peer, r.code());
                }
            }
            AcceptOutcome::Ignored => {}
        }
        outcome
    }

    fn drain_reorder(&mut self, chain_id: &ChainId) {
        loop {
            let next = self.ledger.head(chain_id).map_or(0, |h| h + 1);
            let Some((block, origin)) = self.reorder.take(chain_id, next) else {
                break;
            };
            if self.accept(origin, block) != AcceptOutcome::Appended {
                break;
            }
        }
    }

    fn start_sync(&mut self, peer: SessionId, chain_id: ChainId, from: u64, target: u64) {
        if self.syncs.contains_key(&chain_id) || target < from {
            return;
        }
        let window_end = target.min(from.saturating_add(self.config.sync_window - 1));
        self.syncs.insert(
            chain_id,
            SyncState {
                peer,
                window_end,
                target,
                applied: 0,
            },
        );
        self.send(
            peer,
            WireMessage::GetBlocks {
                chain_id,
                from,
                to: window_end,
            },
        );
    }

    fn finish_sync(&mut self, chain_id: &ChainId, aborted: bool) {
        let Some(state) = self.syncs.remove(chain_id) else {
            return;
        };
        self.events.push(NodeEvent::SyncFinished {
            session: state.peer,
            chain_id: *chain_id,
            applied: state.applied,
            aborted,
        });
        if aborted {
            return;
        }
        // Another session may have announced a higher head meanwhile.
        let local = self.ledger.head(chain_id);
        let best = self
            .sessions
            .iter()
            .filter(|(_, s)| s.state == SessionState::Open)
            .filter_map(|(id, s)| s.peer_heads.get(chain_id).map(|h| (*h, *id)))
            .filter(|(h, _)| local.is_none_or(|l| *h > l))
            .max_by_key(|(h, id)| (*h, std::cmp::Reverse(*id)));
        if let Some((peer_head, peer)) = best {
            if let Some(from) = self.ledger.sync_start(chain_id, peer_head) {
                self.start_sync(peer, *chain_id, from, peer_head);
            }
        }
    }

    fn on_blocks(&mut self, from: SessionId, chain_id: ChainId, blocks: Vec<Block>) {
        let active = self.syncs.get(&chain_id).is_some_and(|s| s.peer == from);
        if !active {
            for b in blocks {
                if b.chain_id == chain_id {
                    self.receive_block(Some(from), b);
                }
            }
            return;
        }
        if blocks.is_empty() {
            self.finish_sync(&chain_id, false);
            return;
        }
        if let Some(last) = blocks.last() {
            self.note_peer_head(from, chain_id, last.height);
        }
        for b in blocks {
            if b.chain_id != chain_id {
                self.penalize(from, "bad-chain-id");
                self.finish_sync(&chain_id, true);
                return;
            }
            match self.accept(Some(from), b) {
                AcceptOutcome::Appended => {
                    if let Some(s) = self.syncs.get_mut(&chain_id) {
                        s.applied += 1;
                    }
                }
                AcceptOutcome::Duplicate => {}
                AcceptOutcome::Gap { .. } => {
                    self.penalize(from, "bad-height");
                    self.finish_sync(&chain_id, true);
                    return;
                }
                AcceptOutcome::Rejected(_) | AcceptOutcome::Ignored => {
                    self.finish_sync(&chain_id, true);
                    return;
                }
                AcceptOutcome::Equivocation(_) => return,
            }
        }
        self.drain_reorder(&chain_id);
        let Some(state) = self.syncs.get(&chain_id).copied() else {
            return;
        };
        let head = self.ledger.head(&chain_id);
        if head.is_none_or(|h| h < state.window_end) {
            return;
        }
        let head = head.expect("checked above");
        let peer_known = self
            .sessions
            .get(&from)
            .and_then(|s| s.peer_heads.get(&chain_id).copied())
            .unwrap_or(0);
        let target = state.target.max(peer_known);
        if head >= target {
            self.finish_sync(&chain_id, false);
            return;
        }
        let next = head + 1;
        let window_end = target.min(next.saturating_add(self.config.sync_window - 1));
        if let Some(s) = self.syncs.get_mut(&chain_id) {
            s.window_end = window_end;
            s.target = target;
        }
        self.send(
            from,
            WireMessage::GetBlocks {
                chain_id,
                from: next,
                to: window_end,
            },
        );
    }

    /// Verifies records, pools the new ones and forwards them once to every
    /// other session.
    pub fn submit_records(
        &mut self,
        origin: Option<SessionId>,
        chain_id: ChainId,
        records: Vec<RecordSlot>,
    ) -> SubmitReport {
        let mut report = SubmitReport::default();
        let mut forward = Vec::new();
        let relayable = self.ledger.is_relayable(&chain_id);
        for (i, slot) in records.into_iter().enumerate() {
            let record = match slot {
                RecordSlot::Parsed(r) => r,
                RecordSlot::Malformed { .. } => {
                    report.rejected.push((i, "decode-error".into()));
                    continue;
                }
            };
            let key = record.dedup_key();
            if self.record_seen.contains(&key) {
                report.duplicates += 1;
                continue;
            }
            if let Err(e) = self.verifier.verify(&record) {
                report.rejected.push((i, e.code().into()));
                continue;
            }
            if !relayable {
                report.rejected.push((i, "chain-not-followed".into()));
                continue;
            }
            self.record_seen.insert(key);
            self.pool.push(chain_id, record.clone());
            forward.push(RecordSlot::Parsed(record));
            report.accepted += 1;
        }
        if !forward.is_empty() {
            let targets: Vec<SessionId> = self
                .open_sessions()
                .into_iter()
                .filter(|s| Some(*s) != origin)
                .collect();
            for s in targets {
                self.send(
                    s,
                    WireMessage::SubmitRecords {
                        chain_id,
                        records: forward.clone(),
                    },
                );
            }
            self.events.push(NodeEvent::RecordsAccepted {
                chain_id,
                count: report.accepted,
            });
        }
        report
    }

    /// Asks every open session for more addresses.
    pub fn request_peers(&mut self) {
        for s in self.open_sessions() {
            self.send(s, WireMessage::GetPeers);
        }
    }
}

#[cfg(test)]
#[path = "node_tests.rs"]
mod tests;
