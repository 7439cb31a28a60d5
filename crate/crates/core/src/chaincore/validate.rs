use std::fmt;

use super::block::{canonical_block_bytes, genesis_owner, Block, BlockDraft};
use super::keys::{sha256, KeyPair, PublicKey};
use super::ChainError;

/// Why a block was refused. Each variant maps to a stable wire code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rejection {
    BadChainId,
    BadHash,
    BadSignature,
    BadHeight,
    BadTime,
    BadPrevHash,
    BadChain,
    BadGenesis,
}

impl Rejection {
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::BadChainId => "bad-chain-id",
            Rejection::BadHash => "bad-hash",
            Rejection::BadSignature => "bad-signature",
            Rejection::BadHeight => "bad-height",
            Rejection::BadTime => "bad-time",
            Rejection::BadPrevHash => "bad-prev-hash",
            Rejection::BadChain => "bad-chain",
            Rejection::BadGenesis => "bad-genesis",
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl std::error::Error for Rejection {}

pub fn seal_block(draft: BlockDraft, owner: &KeyPair) -> Result<Block, ChainError> {
    if owner.chain_id() != draft.chain_id {
        return Err(ChainError::WrongOwner);
    }
    let preimage = canonical_block_bytes(
        &draft.chain_id,
        draft.height,
        draft.time,
        &draft.prev_hash,
        &draft.payload,
    )?;
    let hash = sha256(&preimage);
    let signature = owner.sign_digest(&hash);
    Ok(Block {
        chain_id: draft.chain_id,
        height: draft.height,
        time: draft.time,
        prev_hash: draft.prev_hash,
        hash,
        signature,
        payload: draft.payload,
    })
}

/// Checks chain id, then hash, then signature; returns the first failure.
pub fn verify_block(block: &Block, owner: &PublicKey) -> Result<(), Rejection> {
    if block.chain_id.0 != sha256(owner.as_bytes()).0 {
        return Err(Rejection::BadChainId);
    }
    match block.compute_hash() {
        Ok(h) if h == block.hash => {}
        _ => return Err(Rejection::BadHash),
    }
    if !owner.verify_digest(&block.hash, &block.signature) {
        return Err(Rejection::BadSignature);
    }
    Ok(())
}

/// Linkage rules between two consecutive blocks of one chain. `prev` is
/// assumed to have passed [`verify_block`].
pub fn validate_successor(prev: &Block, next: &Block) -> Result<(), Rejection> {
    if prev.height.checked_add(1) != Some(next.height) {
        return Err(Rejection::BadHeight);
    }
    if next.time <= prev.time {
        return Err(Rejection::BadTime);
    }
    if next.prev_hash != prev.hash {
        return Err(Rejection::BadPrevHash);
    }
    if next.chain_id != prev.chain_id {
        return Err(Rejection::BadChain);
    }
    Ok(())
}

/// Genesis rules: height 0, zero prev hash and a payload that embeds
/// `owner`.
pub fn validate_genesis(block: &Block, owner: &PublicKey) -> Result<(), Rejection> {
    if block.height != 0 {
        return Err(Rejection::BadHeight);
    }
    if !block.prev_hash.is_zero() {
        return Err(Rejection::BadPrevHash);
    }
    match genesis_owner(block) {
        Ok((key, _)) if &key == owner => Ok(()),
        _ => Err(Rejection::BadGenesis),
    }
}

/// Two owner-signed blocks at the same height of the same chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivocationEvidence {
    pub block_a: Block,
    pub block_b: Block,
}

impl EquivocationEvidence {
    /// Re-checks every invariant of the evidence against `owner`.
    pub fn verify(&self, owner: &PublicKey) -> bool {
        detect_equivocation(&self.block_a, &self.block_b, owner).is_some()
    }

    pub fn chain_id(&self) -> &super::ChainId {
        &self.block_a.chain_id
    }

    pub fn height(&self) -> u64 {
        self.block_a.height
    }
}

/// Evidence only when both blocks independently pass [`verify_block`];
/// a forged block is not proof of owner misbehaviour.
pub fn detect_equivocation(a: &Block, b: &Block, owner: &PublicKey) -> Option<EquivocationEvidence> {
    if a.chain_id != b.chain_id || a.height != b.height || a.hash == b.hash {
        return None;
    }
    if verify_block(a, owner).is_err() || verify_block(b, owner).is_err() {
        return None;
    }
    Some(EquivocationEvidence {
        block_a: a.clone(),
        block_b: b.clone(),
    })
}
