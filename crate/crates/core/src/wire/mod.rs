//! Node-to-node message envelope, JSON codec and session handshake.
//!
//! Every frame is a UTF-8 JSON text message `{"v":1,"type":...,"body":{...}}`
//! carried over a WebSocket negotiated with the `infnote/1` subprotocol.
//! Blocks travel as lowercase hex of their serialized bytes.

mod handshake;
mod message;

pub use handshake::{handshake, ChainHead, Hello, LocalView, SessionInfo, SyncCandidate};
pub use message::{chunk_blocks, decode_message, encode_message, NetAddress, PeerAddress, RecordSlot, WireMessage};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENVELOPE_VERSION: u32 = 1;
pub const PROTOCOL_VERSION: u32 = 1;
pub const SUBPROTOCOL: &str = "infnote/1";
pub const MAX_BLOCKS_PER_MESSAGE: usize = 64;
/// Upper bound on an encoded frame. A `blocks` message is split so that it
/// never exceeds this, which keeps it under common WebSocket limits.
pub const MAX_FRAME_BYTES: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Full,
    Light,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::Full => "full",
            NodeKind::Light => "light",
        }
    }
}

impl std::str::FromStr for NodeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(NodeKind::Full),
            "light" => Ok(NodeKind::Light),
            other => Err(format!("unknown node kind {other:?}")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad-json: {0}")]
    BadJson(String),
    #[error("unknown-type: {0}")]
    UnknownType(String),
    #[error("bad-version: {0}")]
    BadVersion(String),
    #[error("version-mismatch: local {local}, peer {peer}")]
    VersionMismatch { local: u32, peer: u32 },
    #[error("unexpected message: {0}")]
    Unexpected(String),
}

impl WireError {
    pub fn code(&self) -> &'static str {
        match self {
            WireError::BadJson(_) => "bad-json",
            WireError::UnknownType(_) => "unknown-type",
            WireError::BadVersion(_) => "bad-version",
            WireError::VersionMismatch { .. } => "version-mismatch",
            WireError::Unexpected(_) => "unexpected",
        }
    }

    /// The `error` frame that reports this failure to the peer.
    pub fn to_message(&self) -> WireMessage {
        WireMessage::Error {
            code: self.code().to_string(),
            detail: self.to_string(),
        }
    }
}
