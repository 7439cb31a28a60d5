//! Building blocks for full and light nodes: configuration, the light-node
//! block cache, and chain-owner block production.

mod config;
mod light;
mod producer;

pub use config::{parse_addr, ConfigError, FollowEntry, NodeConfig, PeernetConfig};
pub use light::{LightCache, LightLedger};
pub use producer::{assemble_block, create_genesis, BlockProducer, ProductionPolicy};
