use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chaincore::KeyPair;
use crate::peernet::BootstrapConfig;
use crate::wire::{NetAddress, NodeKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FollowEntry {
    pub owner: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeernetConfig {
    pub listen_host: String,
    /// 0 asks the OS for a free port.
    pub listen_port: u16,
    pub min_peers: usize,
    /// `host:port` entries dialed after DNS seeds.
    pub seeds: Vec<String>,
    pub dns_seeds: Vec<String>,
    /// `host:port` entries dialed first.
    pub manual: Vec<String>,
    pub address_book_path: Option<PathBuf>,
    pub socks_proxy: Option<String>,
    pub tls_cert: Option<PathBuf>,
    pub tls_key: Option<PathBuf>,
}

impl Default for PeernetConfig {
    fn default() -> Self {
        Self {
            listen_host: "127.0.0.1".into(),
            listen_port: 7468,
            min_peers: 3,
            seeds: Vec::new(),
            dns_seeds: Vec::new(),
            manual: Vec::new(),
            address_book_path: None,
            socks_proxy: None,
            tls_cert: None,
            tls_key: None,
        }
    }
}

impl PeernetConfig {
    pub fn bootstrap(&self) -> Result<BootstrapConfig, ConfigError> {
        Ok(BootstrapConfig {
            manual: parse_addrs(&self.manual)?,
            dns_seeds: self.dns_seeds.clone(),
            seeds: parse_addrs(&self.seeds)?,
            default_port: if self.listen_port == 0 { 7468 } else { self.listen_port },
            min_peers: self.min_peers,
        })
    }
}

pub fn parse_addr(s: &str) -> Result<NetAddress, ConfigError> {
    let bad = || ConfigError::Invalid(format!("address {s:?} is not host:port"));
    let (host, port) = s.rsplit_once(':').ok_or_else(bad)?;
    let host = host.trim_start_matches('[').trim_end_matches(']');
    let port: u16 = port.parse().map_err(|_| bad())?;
    if host.is_empty() {
        return Err(bad());
    }
    NetAddress::new(host, port).map_err(|_| bad())
}

fn parse_addrs(list: &[String]) -> Result<Vec<NetAddress>, ConfigError> {
    list.iter().map(|s| parse_addr(s)).collect()
}

/// Node settings, read from a TOML file and overridable through
/// `INFNOTE_*` environment variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeConfig {
    pub kind: NodeKind,
    pub data_dir: PathBuf,
    /// File holding the chain owner's hex secret key.
    pub owner_key_file: Option<PathBuf>,
    /// Genesis label used when an owner node creates its chain.
    pub owner_label: String,
    pub follow: Vec<FollowEntry>,
    pub cache_depth: usize,
    pub block_interval_ms: u64,
    pub serve_api: bool,
    pub api_host: String,
    pub api_port: u16,
    pub peernet: PeernetConfig,
}

impl Default for NodeConfig {
    fn default() -> Self {
        Self {
            kind: NodeKind::Full,
            data_dir: PathBuf::from("infnote-data"),
            owner_key_file: None,
            owner_label: "infnote".into(),
            follow: Vec::new(),
            cache_depth: 64,
            block_interval_ms: 10_000,
            serve_api: true,
            api_host: "127.0.0.1".into(),
            api_port: 7469,
            peernet: PeernetConfig::default(),
        }
    }
}

impl NodeConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: NodeConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn block_interval(&self) -> Duration {
        Duration::from_millis(self.block_interval_ms)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.kind == NodeKind::Light && self.owner_key_file.is_some() {
            return Err(ConfigError::Invalid("a light node cannot hold owner keys".into()));
        }
        if self.cache_depth == 0 {
            return Err(ConfigError::Invalid("cache_depth must be at least 1".into()));
        }
        if self.block_interval_ms == 0 {
            return Err(ConfigError::Invalid("block_interval_ms must be positive".into()));
        }
        self.peernet.bootstrap()?;
        Ok(())
    }

    /// Applies `INFNOTE_*` overrides from `vars` and re-validates.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let num = |k: &str, v: &str| -> Result<u64, ConfigError> {
            v.parse()
                .map_err(|_| ConfigError::Invalid(format!("{k}={v:?} is not a number")))
        };
        let list = |v: &str| -> Vec<String> {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        };
        for (k, v) in vars {
            let (k, v) = (k.as_ref(), v.as_ref());
            match k {
                "INFNOTE_KIND" => self.kind = v.parse().map_err(ConfigError::Invalid)?,
                "INFNOTE_DATA_DIR" => self.data_dir = PathBuf::from(v),
                "INFNOTE_OWNER_KEY_FILE" => self.owner_key_file = Some(PathBuf::from(v)),
                "INFNOTE_OWNER_LABEL" => self.owner_label = v.to_string(),
                "INFNOTE_CACHE_DEPTH" => self.cache_depth = num(k, v)? as usize,
                "INFNOTE_BLOCK_INTERVAL_MS" => self.block_interval_ms = num(k, v)?,
                "INFNOTE_SERVE_API" => self.serve_api = matches!(v, "1" | "true" | "yes"),
                "INFNOTE_API_PORT" => self.api_port = num(k, v)? as u16,
                "INFNOTE_LISTEN_PORT" => self.peernet.listen_port = num(k, v)? as u16,
                "INFNOTE_LISTEN_HOST" => self.peernet.listen_host = v.to_string(),
                "INFNOTE_MIN_PEERS" => self.peernet.min_peers = num(k, v)? as usize,
                "INFNOTE_SEEDS" => self.peernet.seeds = list(v),
                "INFNOTE_DNS_SEEDS" => self.peernet.dns_seeds = list(v),
                "INFNOTE_PEERS" => self.peernet.manual = list(v),
                "INFNOTE_ADDRESS_BOOK" => self.peernet.address_book_path = Some(PathBuf::from(v)),
                "INFNOTE_SOCKS_PROXY" => self.peernet.socks_proxy = Some(v.to_string()),
                _ => {}
            }
        }
        self.validate()
    }

    /// Reads the owner key, if one is configured.
    pub fn owner_keys(&self) -> Result<Option<KeyPair>, ConfigError> {
        let Some(path) = &self.owner_key_file else {
            return Ok(None);
        };
        let text = std::fs::read_to_string(path)?;
        let mut secret = [0u8; 32];
        hex::decode_to_slice(text.trim(), &mut secret)
            .map_err(|e| ConfigError::Invalid(format!("owner key file: {e}")))?;
        KeyPair::from_secret_bytes(&secret)
            .map(Some)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn address_book_path(&self) -> PathBuf {
        self.peernet
            .address_book_path
            .clone()
            .unwrap_or_else(|| self.data_dir.join("peers.txt"))
    }
}
