#![allow(dead_code)]

use std::path::PathBuf;

use infnote_core::apps::{encode_payload, make_delete, make_identity, make_post, ChainRecord};
use infnote_core::chaincore::{generate_keypair, seal_block, Block, BlockDraft, KeyPair};
use infnote_core::nodekit::create_genesis;
use serde_json::{json, Value};

pub const OWNER_SEED: [u8; 32] = [0x01; 32];
pub const OWNER_PUB_HEX: &str = "031b84c5567b126440995d3ed5aaba0565d71e1834604819ff9c17f5e9d5dd078f";
pub const GENESIS_LABEL: &str = "golden";
pub const GENESIS_TIME: u64 = 1_700_000_000_000;

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub enum RecordInput {
    Post {
        author: u8,
        content: &'static str,
        reply_to: Option<usize>,
        client_time: u64,
    },
    Delete {
        author: u8,
        target: usize,
    },
    Identity {
        author: u8,
        name: &'static str,
        profile: Option<&'static str>,
    },
}

fn post(author: u8, content: &'static str, reply_to: Option<usize>, client_time: u64) -> RecordInput {
    RecordInput::Post {
        author,
        content,
        reply_to,
        client_time,
    }
}

pub fn record_inputs() -> Vec<RecordInput> {
    use RecordInput::*;
    vec![
        post(2, "hello, chain", None, 1_700_000_000_100),
        post(3, "first reply", Some(0), 1_700_000_000_200),
        post(4, "h\u{e9}llo w\u{f6}rld \u{2713}", None, 1_700_000_000_300),
        post(
            2,
            "quote \" backslash \\ newline \n tab \t end",
            None,
            1_700_000_000_400,
        ),
        post(3, "control \u{1} \u{1f} del \u{7f}", None, 1_700_000_000_500),
        post(4, "emoji \u{1f680}\u{1f30d}", Some(2), 1_700_000_000_600),
        post(1, "owner announcement", None, 1_700_000_000_700),
        Identity {
            author: 2,
            name: "alice",
            profile: Some("likes hash chains"),
        },
        Identity {
            author: 3,
            name: "bob_2",
            profile: None,
        },
        post(2, "a", None, 0),
        post(2, "a", None, 1),
        post(3, "reply to a reply", Some(1), 1_700_000_001_000),
        Delete { author: 3, target: 1 },
        Delete { author: 1, target: 3 },
        Delete { author: 4, target: 0 },
        post(4, "<script>alert(1)</script>", None, 1_700_000_002_000),
        post(2, "x", None, u64::MAX),
        Identity {
            author: 4,
            name: "carol",
            profile: Some("{\"json\":\"in profile\"}"),
        },
        post(3, "multi\nline\npost", Some(6), 1_700_000_003_000),
        Identity {
            author: 2,
            name: "alice_renamed",
            profile: None,
        },
        post(4, "\u{4e2d}\u{6587}\u{5185}\u{5bb9}", None, 1_700_000_004_000),
        Delete { author: 2, target: 9 },
        post(1, "closing post", Some(20), 1_700_000_005_000),
        post(3, "  spaced  ", None, 1_700_000_006_000),
    ]
}

/// Records per block at heights 1.. (indices into `record_inputs`).
pub fn block_layout() -> Vec<Vec<usize>> {
    vec![
        vec![0],
        vec![1, 2],
        vec![],
        vec![3],
        vec![4, 5, 6],
        vec![7],
        vec![8, 9, 10],
        vec![11],
        vec![12, 13],
        vec![],
        vec![14],
        vec![15],
        vec![16],
        vec![17],
        vec![18],
        vec![19],
        vec![20],
        vec![21],
        vec![22],
        vec![23],
        vec![],
    ]
}

pub fn key(n: u8) -> KeyPair {
    generate_keypair(Some([n; 32])).unwrap()
}

pub fn build_records() -> Vec<ChainRecord> {
    let mut out: Vec<ChainRecord> = Vec::new();
    for input in record_inputs() {
        let r = match input {
            RecordInput::Post {
                author,
                content,
                reply_to,
                client_time,
            } => {
                let reply = reply_to.map(|i| out[i].post_id().unwrap());
                make_post(&key(author), content, reply, client_time).unwrap()
            }
            RecordInput::Delete { author, target } => make_delete(&key(author), out[target].post_id().unwrap()),
            RecordInput::Identity { author, name, profile } => make_identity(&key(author), name, profile).unwrap(),
        };
        out.push(r);
    }
    out
}

pub fn build_blocks(records: &[ChainRecord]) -> Vec<Block> {
    let owner = key(1);
    let mut blocks = vec![create_genesis(&owner, GENESIS_LABEL, GENESIS_TIME).unwrap()];
    for (i, idx) in block_layout().into_iter().enumerate() {
        let prev = blocks.last().unwrap();
        let recs: Vec<ChainRecord> = idx.iter().map(|&j| records[j].clone()).collect();
        blocks.push(
            seal_block(
                BlockDraft {
                    chain_id: owner.chain_id(),
                    height: prev.height + 1,
                    time: GENESIS_TIME + 10_000 * (i as u64 + 1),
                    prev_hash: prev.hash,
                    payload: encode_payload(&recs).unwrap(),
                },
                &owner,
            )
            .unwrap(),
        );
    }
    blocks
}

/// Generator inputs in the form the independent re-derivation reads.
pub fn inputs_json() -> Value {
    let records: Vec<Value> = record_inputs()
        .into_iter()
        .map(|r| match r {
            RecordInput::Post {
                author,
                content,
                reply_to,
                client_time,
            } => json!({
                "kind": "post",
                "author_seed": hex::encode([author; 32]),
                "content": content,
                "reply_to": reply_to,
                "client_time": client_time,
            }),
            RecordInput::Delete { author, target } => json!({
                "kind": "delete_marker",
                "author_seed": hex::encode([author; 32]),
                "target": target,
            }),
            RecordInput::Identity { author, name, profile } => json!({
                "kind": "identity",
                "author_seed": hex::encode([author; 32]),
                "name": name,
                "profile": profile,
            }),
        })
        .collect();
    let blocks: Vec<Value> = block_layout()
        .into_iter()
        .enumerate()
        .map(|(i, idx)| json!({"time": GENESIS_TIME + 10_000 * (i as u64 + 1), "records": idx}))
        .collect();
    json!({
        "owner_seed": hex::encode(OWNER_SEED),
        "owner_pub": OWNER_PUB_HEX,
        "genesis_label": GENESIS_LABEL,
        "genesis_time": GENESIS_TIME,
        "records": records,
        "blocks": blocks,
    })
}

pub fn records_text(records: &[ChainRecord]) -> String {
    records.iter().map(|r| r.to_json() + "\n").collect()
}
