use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use infnote_core::apps::{make_identity, make_post, verify_record, AcceptAll, ChainRecord};
use infnote_core::chaincore::{derive_chain_id, generate_keypair, Block, ChainId, Hash256, KeyPair, PublicKey};
use infnote_core::chainstore::ChainStore;
use infnote_core::nodekit::{assemble_block, parse_addr, BlockProducer, NodeConfig};
use infnote_core::peernet::RecordPool;
use infnote_core::simlab::{measure_throughput, run_scenario, Scenario, ThroughputConfig};
use infnote_core::wire::NodeKind;
use infnote_node::{run_node, BlockView};
use serde_json::{json, Value};

use crate::args::{
    BlockCommand, ChainCommand, Command, IdentityCommand, KindArg, NodeCommand, PostCommand, RecordTarget, SimCommand,
};
use crate::error::CliError;

/// Result of one subcommand: a JSON document and its human rendering.
pub struct Output {
    pub json: Value,
    pub text: String,
}

impl Output {
    fn new(json: Value, text: impl Into<String>) -> Self {
        Self {
            json,
            text: text.into(),
        }
    }
}

type CliResult = Result<Output, CliError>;

pub fn run(command: Command, config: NodeConfig) -> CliResult {
    match command {
        Command::Keygen { seed, out } => keygen(seed.as_deref(), out.as_deref()),
        Command::Chain(c) => chain(c, &config),
        Command::Block(c) => block(c, &config),
        Command::Post(PostCommand::Create {
            target,
            content,
            reply_to,
            time,
        }) => {
            let author = author_key(&target, &config)?;
            let reply_to = reply_to.as_deref().map(parse_hash).transpose()?;
            let record = make_post(&author, &content, reply_to, time.unwrap_or_else(unix_secs))?;
            emit_record(&target, record)
        }
        Command::Identity(IdentityCommand::Register { target, name, profile }) => {
            let author = author_key(&target, &config)?;
            let record = make_identity(&author, &name, profile.as_deref())?;
            emit_record(&target, record)
        }
        Command::Node(NodeCommand::Run {
            kind,
            owner,
            listen_port,
            api_port,
            peers,
        }) => node_run(config, kind, owner, listen_port, api_port, peers),
        Command::Sim(c) => sim(c),
    }
}

fn unix_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn parse_seed(hex_seed: &str) -> Result<[u8; 32], CliError> {
    let bytes = Hash256::from_hex(hex_seed.trim()).map_err(|e| CliError::new("invalid-seed", e.to_string()))?;
    Ok(bytes.0)
}

fn parse_hash(s: &str) -> Result<Hash256, CliError> {
    Hash256::from_hex(s.trim()).map_err(|e| CliError::new("invalid-id", format!("{s:?}: {e}")))
}

fn parse_chain(s: &str) -> Result<ChainId, CliError> {
    ChainId::from_hex(s.trim()).map_err(|e| CliError::new("invalid-chain-id", format!("{s:?}: {e}")))
}

fn read_key(path: &Path) -> Result<KeyPair, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::new("key-file", format!("{}: {e}", path.display())))?;
    let secret = parse_seed(&text).map_err(|e| CliError::new("invalid-key", e.message))?;
    Ok(KeyPair::from_secret_bytes(&secret)?)
}

fn write_key(path: &Path, key: &KeyPair) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, format!("{}\n", Hash256(key.secret_bytes()).to_hex()))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600))?;
    }
    Ok(())
}

fn default_key_path(config: &NodeConfig) -> PathBuf {
    config
        .owner_key_file
        .clone()
        .unwrap_or_else(|| config.data_dir.join("owner.key"))
}

fn author_key(target: &RecordTarget, config: &NodeConfig) -> Result<KeyPair, CliError> {
    read_key(&target.key.clone().unwrap_or_else(|| default_key_path(config)))
}

fn key_json(key: &KeyPair) -> Value {
    json!({
        "public_key": key.public_key().to_hex(),
        "chain_id": key.chain_id().to_hex(),
    })
}

fn keygen(seed: Option<&str>, out: Option<&Path>) -> CliResult {
    let seed = seed.map(parse_seed).transpose()?;
    let key = generate_keypair(seed)?;
    let mut doc = key_json(&key);
    match out {
        Some(path) => {
            write_key(path, &key)?;
            doc["key_file"] = json!(path.display().to_string());
        }
        None => doc["secret_key"] = json!(Hash256(key.secret_bytes()).to_hex()),
    }
    let text = match out {
        Some(path) => format!(
            "public key  {}\nchain id    {}\nsecret key written to {}",
            key.public_key().to_hex(),
            key.chain_id().to_hex(),
            path.display()
        ),
        None => format!(
            "public key  {}\nchain id    {}\nsecret key  {}",
            key.public_key().to_hex(),
            key.chain_id().to_hex(),
            Hash256(key.secret_bytes()).to_hex()
        ),
    };
    Ok(Output::new(doc, text))
}

fn open_store(config: &NodeConfig) -> Result<ChainStore, CliError> {
    Ok(ChainStore::open(&config.data_dir)?)
}

fn chain(cmd: ChainCommand, config: &NodeConfig) -> CliResult {
    let store = open_store(config)?;
    match cmd {
        ChainCommand::Create { label, key } => {
            let path = key.unwrap_or_else(|| default_key_path(config));
            let owner = if path.exists() {
                read_key(&path)?
            } else {
                let k = generate_keypair(None)?;
                write_key(&path, &k)?;
                k
            };
            let id = owner.chain_id();
            if store.registry().entry(&id).is_none() {
                store.follow_chain(id, owner.public_key(), &label)?;
            }
            let genesis = BlockProducer::new(owner.clone()).ensure_genesis(&store, &label, unix_secs() * 1000)?;
            let mut doc = key_json(&owner);
            doc["label"] = json!(label);
            doc["key_file"] = json!(path.display().to_string());
            doc["genesis"] = json!(BlockView::from(&genesis));
            let text = format!("created chain {} ({label})\nowner key {}", id.to_hex(), path.display());
            Ok(Output::new(doc, text))
        }
        ChainCommand::List => {
            let rows: Vec<Value> = store
                .list_chains(None)
                .into_iter()
                .map(|e| {
                    json!({
                        "chain_id": e.chain_id.to_hex(),
                        "owner": e.owner.to_hex(),
                        "label": e.label,
                        "source": e.source,
                        "status": e.status,
                        "height": store.head_height(&e.chain_id),
                    })
                })
                .collect();
            let mut text = String::new();
            for r in &rows {
                let height = r["height"].as_u64().map_or("-".to_string(), |h| h.to_string());
                text.push_str(&format!(
                    "{}  {:<9} {:>8}  {}\n",
                    r["chain_id"].as_str().unwrap_or_default(),
                    r["status"].as_str().unwrap_or_default(),
                    height,
                    r["label"].as_str().unwrap_or_default()
                ));
            }
            if rows.is_empty() {
                text.push_str("no chains\n");
            }
            Ok(Output::new(Value::Array(rows), text.trim_end()))
        }
        ChainCommand::Follow { chain_id, owner, label } => {
            let id = parse_chain(&chain_id)?;
            let owner = PublicKey::from_hex(owner.trim())?;
            if derive_chain_id(owner.as_bytes())? != id {
                return Err(CliError::new("invalid-entry", "owner key does not hash to chain id"));
            }
            store.follow_chain(id, &owner, &label)?;
            Ok(Output::new(
                json!({"chain_id": id.to_hex(), "status": "followed"}),
                format!("following {}", id.to_hex()),
            ))
        }
        ChainCommand::Drop { chain_id, purge_local } => {
            let id = parse_chain(&chain_id)?;
            store.drop_chain(&id)?;
            let mut purged = false;
            if purge_local {
                if let Some(path) = store.log_path(&id).filter(|p| p.exists()) {
                    std::fs::remove_file(path)?;
                    purged = true;
                }
            }
            let text = if purged {
                format!("dropped {} and removed its local blocks", id.to_hex())
            } else {
                format!("dropped {}", id.to_hex())
            };
            Ok(Output::new(
                json!({"chain_id": id.to_hex(), "status": "dropped", "purged": purged}),
                text,
            ))
        }
        ChainCommand::Export { chain_id, file } => {
            let id = parse_chain(&chain_id)?;
            if store.registry().entry(&id).is_none() {
                return Err(CliError::new("unknown-chain", id.to_hex()));
            }
            let n = store.export_chain(&id, &file)?;
            Ok(Output::new(
                json!({"chain_id": id.to_hex(), "blocks": n, "file": file.display().to_string()}),
                format!("wrote {n} blocks to {}", file.display()),
            ))
        }
        ChainCommand::Import { file } => {
            let r = store.import_chain(&file)?;
            Ok(Output::new(
                json!({"chain_id": r.chain_id.to_hex(), "appended": r.appended, "duplicates": r.duplicates}),
                format!(
                    "imported {}: {} appended, {} already present",
                    r.chain_id.to_hex(),
                    r.appended,
                    r.duplicates
                ),
            ))
        }
    }
}

fn block_text(b: &Block) -> String {
    format!(
        "chain     {}\nheight    {}\ntime      {}\nprev      {}\nhash      {}\npayload   {} bytes",
        b.chain_id.to_hex(),
        b.height,
        b.time,
        b.prev_hash.to_hex(),
        b.hash.to_hex(),
        b.payload.len()
    )
}

fn read_records(path: &Path) -> Result<Vec<ChainRecord>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        let items: Vec<Value> =
            serde_json::from_str(trimmed).map_err(|e| CliError::new("decode-error", e.to_string()))?;
        items
            .iter()
            .map(|v| Ok(ChainRecord::from_json(&v.to_string())?))
            .collect()
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(ChainRecord::from_json(l)?))
            .collect()
    }
}

fn block(cmd: BlockCommand, config: &NodeConfig) -> CliResult {
    let store = open_store(config)?;
    match cmd {
        BlockCommand::Query { chain_id, height } => {
            let id = parse_chain(&chain_id)?;
            let b = store.get_block(&id, height)?.ok_or_else(|| {
                CliError::new(
                    "not-found",
                    format!("block {height} of chain {} not found", id.to_hex()),
                )
            })?;
            Ok(Output::new(json!(BlockView::from(&b)), block_text(&b)))
        }
        BlockCommand::Create { chain, records, key } => {
            let id = parse_chain(&chain)?;
            let owner = read_key(&key.unwrap_or_else(|| default_key_path(config)))?;
            if owner.chain_id() != id {
                return Err(CliError::new("wrong-owner", "key does not own this chain"));
            }
            let head = store
                .get_head(&id)?
                .ok_or_else(|| CliError::new("not-found", format!("chain {} has no genesis", id.to_hex())))?;
            let records = read_records(&records)?;
            let total = records.len();
            let mut pool = RecordPool::default();
            for (i, r) in records.into_iter().enumerate() {
                verify_record(&r).map_err(|e| CliError::new(e.code(), format!("record {i}: {e}")))?;
                pool.push(id, r);
            }
            let sealed = assemble_block(&mut pool, &id, &owner, &head, unix_secs() * 1000, &AcceptAll)?
                .ok_or_else(|| CliError::new("empty", "no records to seal"))?;
            store.append_block(&id, sealed.clone())?;
            let left = pool.chain_len(&id);
            let mut doc = json!(BlockView::from(&sealed));
            doc["records"] = json!(total - left);
            doc["left_over"] = json!(left);
            let text = format!("{}\nrecords   {}", block_text(&sealed), total - left);
            Ok(Output::new(doc, text))
        }
    }
}

fn emit_record(target: &RecordTarget, record: ChainRecord) -> CliResult {
    let chain_id = parse_chain(&target.chain)?;
    let record_json: Value =
        serde_json::from_str(&record.to_json()).map_err(|e| CliError::new("decode-error", e.to_string()))?;
    let Some(base) = &target.submit else {
        return Ok(Output::new(record_json, record.to_json()));
    };
    let url = format!("{}/chains/{}/records", base.trim_end_matches('/'), chain_id.to_hex());
    let resp = reqwest::blocking::Client::new()
        .post(&url)
        .header("content-type", "application/json")
        .body(record.to_json())
        .send()?;
    let status = resp.status();
    let body: Value = serde_json::from_str(&resp.text()?).unwrap_or(Value::Null);
    if !status.is_success() {
        let detail = body["detail"].as_str().unwrap_or_default();
        let code = match body["error"].as_str() {
            Some("bad-signature") => "bad-signature",
            Some("bad-schema") => "bad-schema",
            Some("unknown-chain") => "unknown-chain",
            _ => "http",
        };
        return Err(CliError::new(code, format!("{url} answered {status}: {detail}")));
    }
    let text = format!(
        "submitted to {url}: {} accepted, {} duplicate",
        body["accepted"], body["duplicates"]
    );
    Ok(Output::new(json!({"record": record_json, "submitted": body}), text))
}

fn node_run(
    mut config: NodeConfig,
    kind: Option<KindArg>,
    owner: Option<PathBuf>,
    listen_port: Option<u16>,
    api_port: Option<u16>,
    peers: Vec<String>,
) -> CliResult {
    if let Some(k) = kind {
        config.kind = match k {
            KindArg::Full => NodeKind::Full,
            KindArg::Light => NodeKind::Light,
        };
    }
    if owner.is_some() {
        config.owner_key_file = owner;
    }
    if let Some(p) = listen_port {
        config.peernet.listen_port = p;
    }
    if let Some(p) = api_port {
        config.api_port = p;
    }
    for p in &peers {
        parse_addr(p)?;
    }
    config.peernet.manual.extend(peers);
    config.validate()?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let node = run_node(config).await?;
        let started = json!({
            "event": "started",
            "kind": node.kind(),
            "p2p": node.p2p_addr().to_string(),
            "api": node.api_addr().map(|a| a.to_string()),
            "owner_chain": node.owner_chain().map(|c| c.to_hex()),
        });
        println!("{started}");
        tokio::signal::ctrl_c().await?;
        let status = node.status().await.ok();
        node.stop().await?;
        Ok(Output::new(
            json!({"event": "stopped", "status": status}),
            "node stopped",
        ))
    })
}

fn sim(cmd: SimCommand) -> CliResult {
    match cmd {
        SimCommand::Run { scenario, csv } => {
            let text = std::fs::read_to_string(&scenario)
                .map_err(|e| CliError::new("io", format!("{}: {e}", scenario.display())))?;
            let result = run_scenario(&Scenario::from_json(&text)?)?;
            if let Some(path) = &csv {
                std::fs::write(path, result.to_csv())?;
            }
            let mut lines = vec![format!(
                "{} nodes, diameter {}, {} blocks",
                result.nodes,
                result.diameter,
                result.blocks.len()
            )];
            for b in &result.blocks {
                lines.push(format!(
                    "block {:>3}  {:>8} bytes  max {:>9.1} ms  mean {:>9.1} ms",
                    b.height, b.size_bytes, b.max_latency_ms, b.mean_latency_ms
                ));
            }
            lines.push(format!(
                "mean of max latency {:.1} ms, mean latency {:.1} ms",
                result.mean_max_latency_ms, result.mean_latency_ms
            ));
            let doc =
                serde_json::from_str(&result.to_json()).map_err(|e| CliError::new("simulation", e.to_string()))?;
            Ok(Output::new(doc, lines.join("\n")))
        }
        SimCommand::Throughput {
            post_size,
            blocks,
            seed,
        } => {
            let r = measure_throughput(ThroughputConfig {
                post_size,
                blocks,
                seed,
            })?;
            let text = format!(
                "{} posts of {} bytes in {} blocks ({:.0} per block, {} bytes mean)\nwarm verifier {:.0} posts/s\ncold verifier {:.0} posts/s",
                r.posts, r.post_size, r.blocks, r.posts_per_block, r.mean_block_bytes, r.warm.posts_per_second, r.cold.posts_per_second
            );
            Ok(Output::new(json!(r), text))
        }
    }
}
