//! Deterministic discrete-event network simulator. Simulated nodes run the
//! same [`crate::peernet::PeerNode`] logic as live ones; only the transport
//! is replaced by links with latency and bandwidth in virtual time.

mod engine;
mod scenario;
mod throughput;
mod topology;

pub use engine::{
    wire_size, EventLog, FrameLog, SimLedger, SimNode, Simulation, DEFAULT_LIGHT_CACHE_DEPTH, TIME_BASE_MS,
};
pub use scenario::{
    filler_payload, run_scenario, BlockReceipts, CustomLink, ProfileSpec, Scenario, ScenarioResult, TopologySpec,
    Workload,
};
pub use throughput::{measure_throughput, PipelinePass, ThroughputConfig, ThroughputReport};
pub use topology::{Link, LinkParams, NodeId, NodeSpec, Profile, Topology, TopologyKind, MIB};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("topology needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("topology is not connected")]
    Disconnected,
    #[error("bad node: {0}")]
    BadNode(String),
    #[error("bad link: {0}")]
    BadLink(String),
    #[error("unknown link profile {0:?}")]
    UnknownProfile(String),
    #[error("bad scenario: {0}")]
    Scenario(String),
    #[error("chain error: {0}")]
    Chain(String),
    #[error("network did not settle within {0} events")]
    NoQuiescence(u64),
}
