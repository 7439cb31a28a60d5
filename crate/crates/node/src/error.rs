use std::io;
use std::net::SocketAddr;

use infnote_core::chaincore::ChainError;
use infnote_core::chainstore::StoreError;
use infnote_core::nodekit::ConfigError;
use infnote_core::peernet::PeerError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NodeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Peer(#[from] PeerError),
    #[error("bind failure on {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("dial {addr} failed: {detail}")]
    Dial { addr: String, detail: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("node stopped")]
    Stopped,
}

impl NodeError {
    pub(crate) fn bind(addr: impl std::fmt::Display, source: io::Error) -> Self {
        NodeError::Bind {
            addr: addr.to_string(),
            source,
        }
    }

    pub(crate) fn dial(addr: impl std::fmt::Display, detail: impl std::fmt::Display) -> Self {
        NodeError::Dial {
            addr: addr.to_string(),
            detail: detail.to_string(),
        }
    }
}

pub(crate) fn resolve(addr: &str) -> Result<SocketAddr, NodeError> {
    use std::net::ToSocketAddrs;
    addr.to_socket_addrs()
        .map_err(|e| NodeError::bind(addr, e))?
        .next()
        .ok_or_else(|| NodeError::bind(addr, io::Error::new(io::ErrorKind::NotFound, "no address")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_literal_addresses() {
        assert_eq!(resolve("127.0.0.1:0").unwrap().port(), 0);
        assert!(matches!(resolve("no-port"), Err(NodeError::Bind { .. })));
    }
}
