//! Durable per-chain block storage, the chain registry (default list,
//! user overrides, bans) and replay of stored blocks into projections.
//!
//! Each chain lives in its own append-only log file. The log is the only
//! source of truth: the in-memory height and hash indexes are rebuilt from
//! it on open, and a torn or invalid tail is truncated away.

mod log;
mod registry;
mod reorder;
mod store;

pub use log::{LOG_MAGIC, LOG_VERSION};
pub use registry::{render_default_list, ChainRegistry, ChainRegistryEntry, ChainStatus, EntrySource};
pub use reorder::ReorderBuffer;
pub use store::{AppendHook, AppendOutcome, ChainStore, ImportReport};

use std::io;

use thiserror::Error;

use crate::chaincore::{Block, ChainId, EquivocationEvidence, Rejection};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown-chain: {0}")]
    UnknownChain(ChainId),
    #[error("chain-banned: {0}")]
    ChainBanned(ChainId),
    #[error("chain-not-followed: {0}")]
    NotFollowed(ChainId),
    #[error("block rejected: {0}")]
    Rejected(Rejection),
    /// The block verified but does not extend the current head.
    #[error("bad-height: expected {expected}, got {got}")]
    Gap { expected: u64, got: u64 },
    #[error("equivocation at height {}", .0.height())]
    Equivocation(Box<EquivocationEvidence>),
    #[error("invalid-evidence")]
    InvalidEvidence,
    #[error("invalid-entry: {0}")]
    InvalidEntry(String),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl StoreError {
    /// The block-level rejection this error corresponds to, if any.
    pub fn rejection(&self) -> Option<Rejection> {
        match self {
            StoreError::Rejected(r) => Some(*r),
            StoreError::Gap { .. } => Some(Rejection::BadHeight),
            _ => None,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            StoreError::UnknownChain(_) => "unknown-chain",
            StoreError::ChainBanned(_) => "chain-banned",
            StoreError::NotFollowed(_) => "chain-not-followed",
            StoreError::Rejected(r) => r.code(),
            StoreError::Gap { .. } => "bad-height",
            StoreError::Equivocation(_) => "equivocation",
            StoreError::InvalidEvidence => "invalid-evidence",
            StoreError::InvalidEntry(_) => "invalid-entry",
            StoreError::Corrupt(_) => "corrupt",
            StoreError::Io(_) => "io",
        }
    }
}

/// A deterministic left fold over a chain's blocks in height order.
pub trait Projection {
    type State;

    fn initial(&self) -> Self::State;

    fn apply(&self, state: &mut Self::State, block: &Block);
}
