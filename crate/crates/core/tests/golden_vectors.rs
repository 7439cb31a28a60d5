mod common;

use std::fs;

use common::*;
use infnote_core::apps::{decode_payload, verify_record, ChainRecord, RecordBody};
use infnote_core::chaincore::{
    genesis_owner, golden, validate_genesis, validate_successor, verify_block, Block, PublicKey,
};
use k256::ecdsa::signature::hazmat::PrehashSigner;
use k256::ecdsa::{Signature as KSignature, SigningKey};
use serde_json::json;
use sha2::{Digest, Sha256};

fn read_checked_in() -> (Vec<Block>, Vec<String>) {
    let dir = golden_dir();
    let blocks = golden::read_file(&dir.join("blocks.hex")).unwrap();
    let records = fs::read_to_string(dir.join("records.jsonl"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    (blocks, records)
}

fn oracle_sign(seed: u8, digest: &[u8; 32]) -> [u8; 64] {
    let sk = SigningKey::from_bytes(&[seed; 32].into()).unwrap();
    let sig: KSignature = sk.sign_prehash(digest).unwrap();
    let sig = sig.normalize_s().unwrap_or(sig);
    sig.to_bytes().into()
}

fn oracle_pub(seed: u8) -> Vec<u8> {
    let sk = SigningKey::from_bytes(&[seed; 32].into()).unwrap();
    sk.verifying_key().to_encoded_point(true).as_bytes().to_vec()
}

fn oracle_block_digest(b: &Block) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update([1u8]);
    h.update(b.chain_id.0);
    h.update(b.height.to_be_bytes());
    h.update(b.time.to_be_bytes());
    h.update(b.prev_hash.0);
    h.update((b.payload.len() as u32).to_be_bytes());
    h.update(&b.payload);
    h.finalize().into()
}

/// Signing bytes rebuilt through a sorted generic JSON map rather than the
/// hand-written canonical encoder.
fn oracle_signing_bytes(r: &ChainRecord) -> String {
    let body = match &r.body {
        RecordBody::Post {
            post_id,
            content,
            reply_to,
            client_time,
        } => json!({
            "post_id": post_id.to_hex(),
            "content": content,
            "reply_to": reply_to.map(|h| h.to_hex()),
            "client_time": client_time,
        }),
        RecordBody::DeleteMarker { target } => json!({ "target": target.to_hex() }),
        RecordBody::Identity { name, profile } => json!({ "name": name, "profile": profile }),
    };
    serde_json::to_string(&json!({ "body": body, "kind": r.kind().as_str() })).unwrap()
}

#[test]
fn regenerate_on_request() {
    if std::env::var_os("INFNOTE_WRITE_GOLDEN").is_none() {
        return;
    }
    let dir = golden_dir();
    let records = build_records();
    let blocks = build_blocks(&records);
    golden::write_file(&dir.join("blocks.hex"), &blocks).unwrap();
    fs::write(dir.join("records.jsonl"), records_text(&records)).unwrap();
    fs::write(
        dir.join("inputs.json"),
        serde_json::to_string_pretty(&inputs_json()).unwrap() + "\n",
    )
    .unwrap();
}

#[test]
fn owner_key_is_pinned() {
    assert_eq!(key(1).public_key().to_hex(), OWNER_PUB_HEX);
    assert_eq!(hex::encode(oracle_pub(1)), OWNER_PUB_HEX);
}

#[test]
fn files_have_enough_vectors() {
    let (blocks, records) = read_checked_in();
    assert!(blocks.len() >= 20, "{} blocks", blocks.len());
    assert!(records.len() >= 20, "{} records", records.len());
}

#[test]
fn checked_in_files_match_generator() {
    let (blocks, records) = read_checked_in();
    let built = build_records();
    assert_eq!(records.join("\n") + "\n", records_text(&built));
    let built_blocks = build_blocks(&built);
    assert_eq!(golden::encode_lines(&blocks), golden::encode_lines(&built_blocks));
    let inputs: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(golden_dir().join("inputs.json")).unwrap()).unwrap();
    assert_eq!(inputs, inputs_json());
}

#[test]
fn blocks_verify_and_link() {
    let (blocks, _) = read_checked_in();
    let owner = PublicKey::from_hex(OWNER_PUB_HEX).unwrap();
    validate_genesis(&blocks[0], &owner).unwrap();
    assert_eq!(genesis_owner(&blocks[0]).unwrap(), (owner, GENESIS_LABEL.to_string()));
    for pair in blocks.windows(2) {
        verify_block(&pair[1], &owner).unwrap();
        validate_successor(&pair[0], &pair[1]).unwrap();
    }
    let text = fs::read_to_string(golden_dir().join("blocks.hex")).unwrap();
    assert_eq!(golden::encode_lines(&blocks), text);
}

#[test]
fn block_hashes_and_signatures_match_oracle() {
    let (blocks, _) = read_checked_in();
    let chain_id: [u8; 32] = Sha256::digest(oracle_pub(1)).into();
    for b in &blocks {
        assert_eq!(b.chain_id.0, chain_id);
        let digest = oracle_block_digest(b);
        assert_eq!(b.hash.0, digest, "hash at height {}", b.height);
        assert_eq!(
            b.signature.0,
            oracle_sign(1, &digest),
            "signature at height {}",
            b.height
        );
    }
}

#[test]
fn records_verify_and_match_oracle() {
    let (blocks, lines) = read_checked_in();
    let inputs = inputs_json();
    let mut in_blocks = Vec::new();
    for b in &blocks[1..] {
        in_blocks.extend(decode_payload(&b.payload).unwrap());
    }
    assert_eq!(in_blocks.len(), lines.len());
    for (i, line) in lines.iter().enumerate() {
        let r = ChainRecord::from_json(line).unwrap();
        assert_eq!(&r.to_json(), line);
        assert_eq!(r, in_blocks[i]);
        verify_record(&r).unwrap();
        let seed = hex::decode(inputs["records"][i]["author_seed"].as_str().unwrap()).unwrap()[0];
        assert_eq!(r.author_pub.0.to_vec(), oracle_pub(seed));
        let signing = oracle_signing_bytes(&r);
        assert_eq!(signing, r.signing_bytes(), "record {i}");
        let digest: [u8; 32] = Sha256::digest(signing.as_bytes()).into();
        assert_eq!(r.author_sig.0, oracle_sign(seed, &digest), "record {i}");
        if let RecordBody::Post {
            post_id,
            content,
            client_time,
            ..
        } = &r.body
        {
            let mut h = Sha256::new();
            h.update(r.author_pub.0);
            h.update(content.as_bytes());
            h.update(client_time.to_be_bytes());
            assert_eq!(post_id.0, <[u8; 32]>::from(h.finalize()));
        }
    }
}
