//! Peer discovery, address book, block gossip with dedup, record relay and
//! height-windowed chain sync.
//!
//! [`PeerNode`] holds all protocol logic and performs no I/O: it consumes
//! decoded frames tagged with a session id and produces outgoing frames and
//! events. The discrete-event simulator and the socket runtime drive the
//! same type and differ only in how frames are carried.

mod addrbook;
mod bootstrap;
mod gossip;
mod ledger;
mod node;

pub use addrbook::{AddressBook, ADDRESS_BOOK_CAPACITY, DEMOTION_FAILURES};
pub use bootstrap::{
    run_bootstrap, Backoff, Bootstrap, BootstrapConfig, BootstrapOutcome, DialSource, NoResolver, SeedResolver,
};
pub use gossip::{PooledRecord, RecordPool, SeenSet};
pub use ledger::{AcceptOutcome, Ledger};
pub use node::{NodeEvent, PeerConfig, PeerNode, SessionId, SubmitReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PeerError {
    #[error("bootstrap-failed: no source produced a session")]
    BootstrapFailed,
    #[error("invalid address book line {line}: {reason}")]
    AddressBookLine { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
