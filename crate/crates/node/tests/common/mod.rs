#![allow(dead_code)]

use std::future::Future;
use std::path::Path;
use std::time::Duration;

use infnote_core::chaincore::{generate_keypair, KeyPair};
use infnote_core::nodekit::{FollowEntry, NodeConfig};
use infnote_core::wire::NodeKind;

pub fn owner(seed: u8) -> KeyPair {
    generate_keypair(Some([seed; 32])).unwrap()
}

pub fn config(dir: &Path, kind: NodeKind) -> NodeConfig {
    let mut c = NodeConfig {
        kind,
        data_dir: dir.join("data"),
        block_interval_ms: 3_600_000,
        serve_api: false,
        ..NodeConfig::default()
    };
    c.peernet.listen_port = 0;
    c.peernet.min_peers = 1;
    c
}

pub fn owner_config(dir: &Path, key: &KeyPair) -> NodeConfig {
    let path = dir.join("owner.key");
    std::fs::write(&path, hex::encode(key.secret_bytes())).unwrap();
    let mut c = config(dir, NodeKind::Full);
    c.owner_key_file = Some(path);
    c
}

pub fn follower_config(dir: &Path, kind: NodeKind, key: &KeyPair) -> NodeConfig {
    let mut c = config(dir, kind);
    c.follow.push(FollowEntry {
        owner: key.public_key().to_hex(),
        label: "forum".into(),
    });
    c
}

/// Polls `check` until it yields true or ten seconds pass.
pub async fn eventually<F, Fut>(what: &str, mut check: F)
where
    F: FnMut() -> Fut,
    Fut: Future<Output = bool>,
{
    let deadline = tokio::time::Instant::now() + Duration::from_secs(10);
    while tokio::time::Instant::now() < deadline {
        if check().await {
            return;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("timed out waiting for {what}");
}
