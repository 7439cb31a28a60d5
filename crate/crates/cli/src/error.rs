use infnote_core::apps::AppError;
use infnote_core::chaincore::ChainError;
use infnote_core::chainstore::StoreError;
use infnote_core::nodekit::ConfigError;
use infnote_core::simlab::SimError;
use infnote_node::NodeError;
use thiserror::Error;

/// A domain failure with a stable, kebab-case code.
#[derive(Debug, Error)]
#[error("{code}: {message}")]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

fn chain_code(e: &ChainError) -> &'static str {
    match e {
        ChainError::InvalidSeed => "invalid-seed",
        ChainError::InvalidKey(_) => "invalid-key",
        ChainError::PayloadTooLarge { .. } => "payload-too-large",
        ChainError::WrongOwner => "wrong-owner",
        ChainError::MalformedBlock(_) => "malformed-block",
    }
}

impl From<ChainError> for CliError {
    fn from(e: ChainError) -> Self {
        Self::new(chain_code(&e), e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

impl From<AppError> for CliError {
    fn from(e: AppError) -> Self {
        let code = match e {
            AppError::PayloadTooLarge { .. } => "payload-too-large",
            AppError::Decode(_) => "decode-error",
            AppError::OversizeContent { .. } => "oversize-content",
            AppError::BadSchema(_) => "bad-schema",
        };
        Self::new(code, e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::new("config", e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        Self::new("simulation", e.to_string())
    }
}

impl From<NodeError> for CliError {
    fn from(e: NodeError) -> Self {
        match e {
            NodeError::Config(e) => e.into(),
            NodeError::Store(e) => e.into(),
            NodeError::Chain(e) => e.into(),
            NodeError::Bind { .. } => Self::new("bind", e.to_string()),
            other => Self::new("node", other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

impl From<reqwest::Error> for CliError {
    fn from(e: reqwest::Error) -> Self {
        Self::new("http", e.to_string())
    }
}
