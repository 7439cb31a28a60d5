//! Networked Infnote node. A single coordinator task owns the peer protocol
//! engine; every WebSocket session runs its own reader and writer tasks and
//! talks to the coordinator through channels. Full nodes can also serve the
//! direct-connect HTTP API.

mod api;
mod error;
mod runtime;
mod transport;

pub use api::{api_router, BlockView, ChainSummary, NodeStatus, SubmitResponse};
pub use error::NodeError;
pub use runtime::{run_node, NodeHandle};
pub use transport::{dial, DnsResolver};
