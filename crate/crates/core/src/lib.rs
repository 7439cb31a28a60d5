//! Core of an Infnote node: a multi-chain proof-of-authority ledger where
//! every chain has exactly one owner key, plus the record layer, the wire
//! protocol, the gossip/sync state machine and a deterministic network
//! simulator that drives the same state machine in virtual time.
//!
//! The crate is transport-free. `peernet::PeerNode` consumes decoded
//! [`wire::WireMessage`]s and produces outbound messages; a runtime (the
//! `infnote-node` crate, or [`simlab`]) moves them between peers.

pub mod apps;
pub mod chaincore;
pub mod chainstore;
pub mod nodekit;
pub mod peernet;
pub mod simlab;
pub mod wire;

pub use chaincore::{Block, ChainId, Hash256, KeyPair, PublicKey};
