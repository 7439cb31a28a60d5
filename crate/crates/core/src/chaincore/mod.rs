//! Block encoding, hashing, owner keys, signing and the block-level
//! validation rules.
//!
//! A block is identified by the SHA-256 of its canonical preimage (every
//! field except `hash` and `signature`); the owner signs that hash. Blocks
//! travel as `canonical bytes ‖ 64-byte compact signature`, so the hash is
//! always recomputed by the receiver and never trusted from the wire.

mod block;
pub mod golden;
mod keys;
mod validate;

pub use block::{
    canonical_block_bytes, genesis_owner, genesis_payload, Block, BlockDraft, ChainId, Hash256, Signature,
    BLOCK_VERSION, HEADER_LEN, MAX_PAYLOAD_BYTES, SIGNATURE_LEN,
};
pub use keys::{derive_chain_id, generate_keypair, sha256, KeyPair, PublicKey, PUBLIC_KEY_LEN};
pub use validate::{
    detect_equivocation, seal_block, validate_genesis, validate_successor, verify_block, EquivocationEvidence,
    Rejection,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("invalid-seed: seed reduces to the zero scalar")]
    InvalidSeed,
    #[error("invalid-key: {0}")]
    InvalidKey(String),
    #[error("payload-too-large: {len} bytes exceeds {max}")]
    PayloadTooLarge { len: usize, max: usize },
    #[error("wrong-owner: draft chain id does not belong to the sealing key")]
    WrongOwner,
    #[error("malformed block: {0}")]
    MalformedBlock(String),
}
