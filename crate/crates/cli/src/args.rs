use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "infnote", version, about = "Operate Infnote chains and nodes")]
pub struct Cli {
    /// Node config file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured data directory.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a key pair.
    Keygen {
        /// 32-byte hex seed for a deterministic key.
        #[arg(long)]
        seed: Option<String>,
        /// Write the secret key to this file instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    #[command(subcommand)]
    Chain(ChainCommand),
    #[command(subcommand)]
    Block(BlockCommand),
    #[command(subcommand)]
    Post(PostCommand),
    #[command(subcommand)]
    Identity(IdentityCommand),
    #[command(subcommand)]
    Node(NodeCommand),
    #[command(subcommand)]
    Sim(SimCommand),
}

#[derive(Debug, Subcommand)]
pub enum ChainCommand {
    /// Create a chain owned by a key and seal its genesis block.
    Create {
        #[arg(long)]
        label: String,
        /// Owner secret key file; created when missing.
        #[arg(long)]
        key: Option<PathBuf>,
    },
    /// List known chains with their local heights.
    List,
    /// Follow a chain by id and owner public key.
    Follow {
        chain_id: String,
        #[arg(long)]
        owner: String,
        #[arg(long, default_value = "followed")]
        label: String,
    },
    /// Stop following a chain. Block files are kept unless purged.
    Drop {
        chain_id: String,
        #[arg(long)]
        purge_local: bool,
    },
    /// Write a chain as one hex block per line.
    Export { chain_id: String, file: PathBuf },
    /// Append blocks from a hex file, following the chain if unknown.
    Import { file: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum BlockCommand {
    /// Print the block at a height.
    Query { chain_id: String, height: u64 },
    /// Seal signed records into the next block of an owned chain.
    Create {
        #[arg(long)]
        chain: String,
        /// Records as a JSON array or one JSON object per line.
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        key: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RecordTarget {
    #[arg(long)]
    pub chain: String,
    /// Author secret key file.
    #[arg(long)]
    pub key: Option<PathBuf>,
    /// Base URL of a full node API to submit the record to.
    #[arg(long)]
    pub submit: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum PostCommand {
    /// Sign a post record.
    Create {
        #[command(flatten)]
        target: RecordTarget,
        #[arg(long)]
        content: String,
        /// Post id being replied to.
        #[arg(long)]
        reply_to: Option<String>,
        /// Client time in unix seconds; defaults to now.
        #[arg(long)]
        time: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum IdentityCommand {
    /// Sign a name registration record.
    Register {
        #[command(flatten)]
        target: RecordTarget,
        #[arg(long)]
        name: String,
        #[arg(long)]
        profile: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Full,
    Light,
}

#[derive(Debug, Subcommand)]
pub enum NodeCommand {
    /// Run a node until interrupted.
    Run {
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// Owner secret key file; the node produces that chain.
        #[arg(long)]
        owner: Option<PathBuf>,
        #[arg(long)]
        listen_port: Option<u16>,
        #[arg(long)]
        api_port: Option<u16>,
        /// Peer to dial first, as host:port. Repeatable.
        #[arg(long = "peer")]
        peers: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Run a scenario file to quiescence.
    Run {
        scenario: PathBuf,
        /// Write node_id,block_height,receipt_ms rows to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Measure owner-side block processing throughput.
    Throughput {
        #[arg(long, default_value_t = 250)]
        post_size: usize,
        #[arg(long, default_value_t = 32)]
        blocks: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}
