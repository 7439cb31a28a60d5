use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use infnote_core::apps::{AcceptAll, ChainRecord};
use infnote_core::chaincore::{derive_chain_id, Block, ChainId, KeyPair, PublicKey};
use infnote_core::chainstore::{ChainRegistry, ChainStore};
use infnote_core::nodekit::{assemble_block, BlockProducer, LightLedger, NodeConfig, ProductionPolicy};
use infnote_core::peernet::{
    AcceptOutcome, AddressBook, Backoff, Bootstrap, BootstrapConfig, BootstrapOutcome, Ledger, NodeEvent, PeerConfig,
    PeerNode, SessionId, SubmitReport,
};
use infnote_core::wire::{NetAddress, NodeKind, RecordSlot, WireMessage};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tracing::{debug, info, warn};

use crate::api::{api_router, NodeStatus};
use crate::error::resolve;
use crate::transport::{accept, dial, run_session, DnsResolver};
use crate::NodeError;

type NodeLedger = Box<dyn Ledger + Send>;

const COMMAND_QUEUE: usize = 1024;
const REBOOTSTRAP_CHECK: Duration = Duration::from_secs(30);
const MAX_PRODUCTION_TICK: Duration = Duration::from_millis(100);

pub(crate) enum Command {
    Opened {
        session: SessionId,
        outbound: bool,
        peer: Option<NetAddress>,
        tx: mpsc::UnboundedSender<WireMessage>,
    },
    Frame {
        session: SessionId,
        msg: WireMessage,
    },
    Closed {
        session: SessionId,
    },
    Submit {
        chain_id: ChainId,
        records: Vec<ChainRecord>,
        reply: oneshot::Sender<SubmitReport>,
    },
    Status {
        reply: oneshot::Sender<NodeStatus>,
    },
    Pending {
        chain_id: ChainId,
        reply: oneshot::Sender<usize>,
    },
    Produce {
        reply: oneshot::Sender<Result<Option<Block>, NodeError>>,
    },
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

struct SessionLink {
    tx: mpsc::UnboundedSender<WireMessage>,
    peer: Option<NetAddress>,
}

struct Coordinator {
    node: PeerNode<NodeLedger>,
    kind: NodeKind,
    owner: Option<KeyPair>,
    store: Option<Arc<ChainStore>>,
    policy: ProductionPolicy,
    last_block: Instant,
    sessions: HashMap<SessionId, SessionLink>,
    book: Arc<Mutex<AddressBook>>,
    dials: mpsc::UnboundedSender<NetAddress>,
    peer_count: Arc<AtomicUsize>,
    listen: NetAddress,
    min_peers: usize,
}

impl Coordinator {
    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Opened {
                session,
                outbound,
                peer,
                tx,
            } => {
                self.sessions.insert(session, SessionLink { tx, peer });
                self.node.open_session(session, outbound);
            }
            Command::Frame { session, msg } => {
                if self.sessions.contains_key(&session) {
                    self.node.handle(session, msg);
                }
            }
            Command::Closed { session } => {
                self.sessions.remove(&session);
                self.node.close_session(session);
            }
            Command::Submit {
                chain_id,
                records,
                reply,
            } => {
                let slots = records.into_iter().map(RecordSlot::Parsed).collect();
                let report = self.node.submit_records(None, chain_id, slots);
                let _ = reply.send(report);
                self.maybe_produce(false);
            }
            Command::Status { reply } => {
                let _ = reply.send(self.status());
            }
            Command::Pending { chain_id, reply } => {
                let _ = reply.send(self.node.pool().chain_len(&chain_id));
            }
            Command::Produce { reply } => {
                let _ = reply.send(self.produce());
            }
        }
        self.flush();
    }

    fn status(&self) -> NodeStatus {
        let view = self.node.ledger().local_view();
        NodeStatus {
            kind: self.kind,
            peers: self.node.open_sessions().len(),
            chains: view.heads.iter().map(|(id, h)| (id.to_hex(), *h)).collect(),
        }
    }

    fn maybe_produce(&mut self, timer: bool) {
        let Some(owner) = &self.owner else {
            return;
        };
        let id = owner.chain_id();
        let pool = self.node.pool();
        let since = if timer {
            self.last_block.elapsed()
        } else {
            Duration::ZERO
        };
        if self
            .policy
            .should_produce(since, pool.chain_payload_bytes(&id), pool.chain_len(&id))
        {
            if let Err(e) = self.produce() {
                warn!(error = %e, "block production failed");
            }
        }
    }

    fn produce(&mut self) -> Result<Option<Block>, NodeError> {
        let (Some(owner), Some(store)) = (&self.owner, &self.store) else {
            return Ok(None);
        };
        let id = owner.chain_id();
        let head = store
            .get_head(&id)?
            .ok_or(NodeError::Unsupported("owner chain has no genesis".into()))?;
        let block = assemble_block(self.node.pool_mut(), &id, owner, &head, unix_ms(), &AcceptAll)?;
        self.last_block = Instant::now();
        let Some(block) = block else {
            return Ok(None);
        };
        match self.node.publish_block(block.clone()) {
            AcceptOutcome::Appended => {
                info!(chain = %id, height = block.height, "sealed block");
                Ok(Some(block))
            }
            other => Err(NodeError::Unsupported(format!("own block not appended: {other:?}"))),
        }
    }

    fn flush(&mut self) {
        for (session, msg) in self.node.take_outbox() {
            if let Some(link) = self.sessions.get(&session) {
                let _ = link.tx.send(msg);
            }
        }
        for ev in self.node.take_events() {
            self.on_event(ev);
        }
        self.peer_count
            .store(self.node.open_sessions().len(), Ordering::Relaxed);
    }

    fn on_event(&mut self, ev: NodeEvent) {
        let now = unix_ms() / 1000;
        match ev {
            NodeEvent::SessionOpened { session, .. } => {
                if let Some(peer) = self.sessions.get(&session).and_then(|l| l.peer.clone()) {
                    self.book.lock().expect("book lock").record_handshake(&peer, now);
                }
                self.refresh_advertised();
            }
            NodeEvent::HandshakeFailed { session, reason } | NodeEvent::Disconnect { session, reason } => {
                debug!(session, reason, "closing session");
                if let Some(link) = self.sessions.remove(&session) {
                    if let Some(peer) = link.peer {
                        self.book.lock().expect("book lock").record_failure(&peer);
                    }
                }
                self.node.close_session(session);
                self.refresh_advertised();
            }
            NodeEvent::Penalized { session, reason } => {
                debug!(session, reason, "peer penalized");
                if let Some(peer) = self.sessions.get(&session).and_then(|l| l.peer.clone()) {
                    self.book.lock().expect("book lock").record_failure(&peer);
                }
            }
            NodeEvent::PeersLearned { addresses, .. } => {
                let connected: Vec<NetAddress> = self.sessions.values().filter_map(|l| l.peer.clone()).collect();
                let mut book = self.book.lock().expect("book lock");
                let mut wanted = self.min_peers.saturating_sub(self.node.open_sessions().len());
                for addr in addresses {
                    if addr == self.listen {
                        continue;
                    }
                    book.insert(addr.clone(), now);
                    if wanted > 0 && !connected.contains(&addr) {
                        let _ = self.dials.send(addr);
                        wanted -= 1;
                    }
                }
            }
            NodeEvent::ChainBanned { chain_id, height } => {
                warn!(chain = %chain_id, height, "chain banned after equivocation");
            }
            NodeEvent::BlockAccepted { chain_id, height, .. } => {
                debug!(chain = %chain_id, height, "block accepted");
            }
            _ => {}
        }
    }

    fn refresh_advertised(&mut self) {
        let mut addrs = vec![self.listen.clone()];
        for a in self.sessions.values().filter_map(|l| l.peer.clone()) {
            if !addrs.contains(&a) {
                addrs.push(a);
            }
        }
        self.node.set_advertised(addrs);
    }

    async fn run(mut self, mut rx: mpsc::Receiver<Command>, mut shutdown: watch::Receiver<bool>, tick: Duration) {
        let mut timer = tokio::time::interval(tick);
        timer.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        loop {
            tokio::select! {
                cmd = rx.recv() => match cmd {
                    Some(cmd) => self.handle(cmd),
                    None => break,
                },
                _ = timer.tick() => {
                    self.maybe_produce(true);
                    self.flush();
                }
                _ = shutdown.changed() => break,
            }
        }
        self.sessions.clear();
    }
}

/// Running node. Dropping the handle does not stop the node; call
/// [`NodeHandle::stop`].
pub struct NodeHandle {
    kind: NodeKind,
    p2p_addr: SocketAddr,
    api_addr: Option<SocketAddr>,
    store: Option<Arc<ChainStore>>,
    owner_chain: Option<ChainId>,
    cmd: mpsc::Sender<Command>,
    dials: mpsc::UnboundedSender<NetAddress>,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
    book: Arc<Mutex<AddressBook>>,
    book_path: std::path::PathBuf,
}

impl NodeHandle {
    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn p2p_addr(&self) -> SocketAddr {
        self.p2p_addr
    }

    pub fn api_addr(&self) -> Option<SocketAddr> {
        self.api_addr
    }

    /// Block store of a full node.
    pub fn store(&self) -> Option<&Arc<ChainStore>> {
        self.store.as_ref()
    }

    /// Chain produced by this node when it holds owner keys.
    pub fn owner_chain(&self) -> Option<ChainId> {
        self.owner_chain
    }

    pub(crate) fn commands(&self) -> mpsc::Sender<Command> {
        self.cmd.clone()
    }

    async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, NodeError> {
        let (tx, rx) = oneshot::channel();
        self.cmd.send(make(tx)).await.map_err(|_| NodeError::Stopped)?;
        rx.await.map_err(|_| NodeError::Stopped)
    }

    pub async fn status(&self) -> Result<NodeStatus, NodeError> {
        self.ask(|reply| Command::Status { reply }).await
    }

    pub async fn submit(&self, chain_id: ChainId, records: Vec<ChainRecord>) -> Result<SubmitReport, NodeError> {
        self.ask(|reply| Command::Submit {
            chain_id,
            records,
            reply,
        })
        .await
    }

    /// Records pooled for `chain_id` and not yet sealed.
    pub async fn pending(&self, chain_id: ChainId) -> Result<usize, NodeError> {
        self.ask(|reply| Command::Pending { chain_id, reply }).await
    }

    /// Seals a block from the pool now, if this node owns a chain.
    pub async fn produce_now(&self) -> Result<Option<Block>, NodeError> {
        self.ask(|reply| Command::Produce { reply }).await?
    }

    /// Dials `addr` in the background.
    pub fn connect(&self, addr: NetAddress) -> Result<(), NodeError> {
        self.dials.send(addr).map_err(|_| NodeError::Stopped)
    }

    /// Stops every task and saves the address book.
    pub async fn stop(self) -> Result<(), NodeError> {
        let _ = self.shutdown.send(true);
        for t in self.tasks {
            let _ = t.await;
        }
        let book = self.book.lock().expect("book lock");
        if let Some(dir) = self.book_path.parent() {
            std::fs::create_dir_all(dir).map_err(infnote_core::peernet::PeerError::Io)?;
        }
        book.save(&self.book_path)?;
        Ok(())
    }
}

fn build_ledger(
    config: &NodeConfig,
    owner: Option<&KeyPair>,
) -> Result<(NodeLedger, Option<Arc<ChainStore>>), NodeError> {
    let follows: Vec<(ChainId, PublicKey, String)> = config
        .follow
        .iter()
        .map(|f| {
            let key = PublicKey::from_hex(&f.owner)
                .map_err(|e| infnote_core::nodekit::ConfigError::Invalid(format!("follow owner: {e}")))?;
            let id = derive_chain_id(key.as_bytes())?;
            Ok((id, key, f.label.clone()))
        })
        .collect::<Result<_, NodeError>>()?;
    match config.kind {
        NodeKind::Full => {
            let store = Arc::new(ChainStore::open(&config.data_dir)?);
            for (id, key, label) in &follows {
                if store.registry().entry(id).is_none() {
                    store.follow_chain(*id, key, label)?;
                }
            }
            if let Some(owner) = owner {
                let id = owner.chain_id();
                if store.registry().entry(&id).is_none() {
                    store.follow_chain(id, owner.public_key(), &config.owner_label)?;
                }
                BlockProducer::new(owner.clone()).ensure_genesis(&store, &config.owner_label, unix_ms())?;
            }
            Ok((Box::new(store.clone()), Some(store)))
        }
        NodeKind::Light => {
            let mut registry = ChainRegistry::open(&config.data_dir)?;
            for (id, key, label) in &follows {
                if registry.entry(id).is_none() {
                    registry.follow(*id, key, label)?;
                }
            }
            Ok((Box::new(LightLedger::new(registry, config.cache_depth)), None))
        }
    }
}

/// Starts a node: opens storage, binds the peer listener (port 0 picks a
/// free port) and the HTTP API, and begins bootstrapping.
pub async fn run_node(config: NodeConfig) -> Result<NodeHandle, NodeError> {
    config.validate()?;
    if config.peernet.tls_cert.is_some() || config.peernet.tls_key.is_some() {
        return Err(NodeError::Unsupported(
            "TLS termination is not built in; put a TLS proxy in front of the listener".into(),
        ));
    }
    let owner = config.owner_keys()?;
    let (ledger, store) = build_ledger(&config, owner.as_ref())?;

    let book_path = config.address_book_path();
    let book = if book_path.exists() {
        AddressBook::load(&book_path)?
    } else {
        AddressBook::default()
    };
    let book = Arc::new(Mutex::new(book));

    let p2p_bind = format!("{}:{}", config.peernet.listen_host, config.peernet.listen_port);
    let listener = TcpListener::bind(resolve(&p2p_bind)?)
        .await
        .map_err(|e| NodeError::bind(&p2p_bind, e))?;
    let p2p_addr = listener.local_addr().map_err(|e| NodeError::bind(&p2p_bind, e))?;
    let listen = NetAddress::new(config.peernet.listen_host.clone(), p2p_addr.port())
        .map_err(|e| NodeError::bind(&p2p_bind, std::io::Error::other(e)))?;

    let peer_config = PeerConfig {
        min_peers: config.peernet.min_peers,
        ..PeerConfig::default()
    };
    let mut node = PeerNode::new(ledger, peer_config);
    node.set_advertised(vec![listen.clone()]);

    let (cmd_tx, cmd_rx) = mpsc::channel(COMMAND_QUEUE);
    let (dial_tx, dial_rx) = mpsc::unbounded_channel();
    let (shutdown_tx, shutdown_rx) = watch::channel(false);
    let peer_count = Arc::new(AtomicUsize::new(0));
    let ids = Arc::new(AtomicU64::new(1));
    let proxy = config.peernet.socks_proxy.clone();

    let coordinator = Coordinator {
        node,
        kind: config.kind,
        owner: owner.clone(),
        store: store.clone(),
        policy: ProductionPolicy {
            interval: config.block_interval(),
            ..ProductionPolicy::default()
        },
        last_block: Instant::now(),
        sessions: HashMap::new(),
        book: book.clone(),
        dials: dial_tx.clone(),
        peer_count: peer_count.clone(),
        listen: listen.clone(),
        min_peers: config.peernet.min_peers,
    };
    let tick = config.block_interval().min(MAX_PRODUCTION_TICK);
    let mut tasks = vec![tokio::spawn(coordinator.run(cmd_rx, shutdown_rx.clone(), tick))];
    tasks.push(tokio::spawn(accept_loop(
        listener,
        ids.clone(),
        cmd_tx.clone(),
        shutdown_rx.clone(),
    )));
    tasks.push(tokio::spawn(dial_loop(
        dial_rx,
        ids.clone(),
        cmd_tx.clone(),
        book.clone(),
        proxy.clone(),
        shutdown_rx.clone(),
    )));
    let bootstrap = config.peernet.bootstrap()?;
    tasks.push(tokio::spawn(bootstrap_loop(
        bootstrap,
        book.clone(),
        ids,
        cmd_tx.clone(),
        proxy,
        peer_count,
        listen,
        shutdown_rx.clone(),
    )));

    let mut handle = NodeHandle {
        kind: config.kind,
        p2p_addr,
        api_addr: None,
        store,
        owner_chain: owner.as_ref().map(KeyPair::chain_id),
        cmd: cmd_tx,
        dials: dial_tx,
        shutdown: shutdown_tx,
        tasks,
        book,
        book_path,
    };
    if config.serve_api {
        if let Some(router) = api_router(&handle) {
            let api_bind = format!("{}:{}", config.api_host, config.api_port);
            let listener = TcpListener::bind(resolve(&api_bind)?)
                .await
                .map_err(|e| NodeError::bind(&api_bind, e))?;
            handle.api_addr = Some(listener.local_addr().map_err(|e| NodeError::bind(&api_bind, e))?);
            let mut stop = shutdown_rx;
            handle.tasks.push(tokio::spawn(async move {
                let serve = axum::serve(listener, router).with_graceful_shutdown(async move {
                    let _ = stop.changed().await;
                });
                if let Err(e) = serve.await {
                    warn!(error = %e, "api server stopped");
                }
            }));
        }
    }
    info!(p2p = %handle.p2p_addr, api = ?handle.api_addr, kind = handle.kind.as_str(), "node running");
    Ok(handle)
}

async fn accept_loop(
    listener: TcpListener,
    ids: Arc<AtomicU64>,
    cmd: mpsc::Sender<Command>,
    mut shutdown: watch::Receiver<bool>,
) {
    let mut sessions = Vec::new();
    loop {
        tokio::select! {
            conn = listener.accept() => {
                let Ok((stream, from)) = conn else { continue };
                let id = ids.fetch_add(1, Ordering::Relaxed);
                let cmd = cmd.clone();
                sessions.push(tokio::spawn(async move {
                    match accept(stream).await {
                        Ok(ws) => run_session(ws, id, false, None, cmd).await,
                        Err(e) => debug!(%from, error = %e, "upgrade refused"),
                    }
                }));
                sessions.retain(|t: &JoinHandle<()>| !t.is_finished());
            }
            _ = shutdown.changed() => break,
        }
    }
    for t in sessions {
        t.abort();
    }
}

async fn dial_loop(
    mut requests: mpsc::UnboundedReceiver<NetAddress>,
    ids: Arc<AtomicU64>,
    cmd: mpsc::Sender<Command>,
    book: Arc<Mutex<AddressBook>>,
    proxy: Option<String>,
    mut shutdown: watch::Receiver<bool>,
) {
    let mut sessions = Vec::new();
    loop {
        tokio::select! {
            req = requests.recv() => {
                let Some(addr) = req else { break };
                let (ids, cmd, book, proxy) = (ids.clone(), cmd.clone(), book.clone(), proxy.clone());
                sessions.push(tokio::spawn(async move {
                    match dial(&addr, proxy.as_deref()).await {
                        Ok(ws) => {
                            let id = ids.fetch_add(1, Ordering::Relaxed);
                            run_session(ws, id, true, Some(addr), cmd).await;
                        }
                        Err(e) => {
                            debug!(error = %e, "dial failed");
                            book.lock().expect("book lock").record_failure(&addr);
                        }
                    }
                }));
                sessions.retain(|t: &JoinHandle<()>| !t.is_finished());
            }
            _ = shutdown.changed() => break,
        }
    }
    for t in sessions {
        t.abort();
    }
}

#[allow(clippy::too_many_arguments)]
async fn bootstrap_loop(
    config: BootstrapConfig,
    book: Arc<Mutex<AddressBook>>,
    ids: Arc<AtomicU64>,
    cmd: mpsc::Sender<Command>,
    proxy: Option<String>,
    peers: Arc<AtomicUsize>,
    own: NetAddress,
    mut shutdown: watch::Receiver<bool>,
) {
    let mut backoff = Backoff::default();
    loop {
        let resolver = DnsResolver::lookup(&config.dns_seeds, config.default_port).await;
        let mut plan = Bootstrap::new(&config, &book.lock().expect("book lock"));
        while let Some((addr, source)) = plan.next_dial(&resolver) {
            if addr == own {
                continue;
            }
            let ok = tokio::select! {
                r = dial(&addr, proxy.as_deref()) => match r {
                    Ok(ws) => {
                        let id = ids.fetch_add(1, Ordering::Relaxed);
                        tokio::spawn(run_session(ws, id, true, Some(addr.clone()), cmd.clone()));
                        true
                    }
                    Err(e) => {
                        debug!(?source, error = %e, "bootstrap dial failed");
                        false
                    }
                },
                _ = shutdown.changed() => return,
            };
            plan.report(&addr, ok, &mut book.lock().expect("book lock"), unix_ms() / 1000);
        }
        let delay = match plan.outcome(&mut backoff) {
            BootstrapOutcome::Connected(_) => REBOOTSTRAP_CHECK,
            BootstrapOutcome::Failed { retry_in } => {
                info!(?retry_in, "bootstrap-failed: no source produced a session");
                retry_in
            }
        };
        loop {
            tokio::select! {
                _ = tokio::time::sleep(delay) => {}
                _ = shutdown.changed() => return,
            }
            if peers.load(Ordering::Relaxed) == 0 {
                break;
            }
        }
    }
}
