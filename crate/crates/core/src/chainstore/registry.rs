use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::StoreError;
use crate::chaincore::{derive_chain_id, Block, ChainId, EquivocationEvidence, PublicKey};

pub const DEFAULT_LIST_FILE: &str = "default_chains.txt";
pub const USER_LIST_FILE: &str = "user_chains.txt";
pub const BAN_LIST_FILE: &str = "bans.txt";
const MAX_LABEL_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntrySource {
    DefaultList,
    UserAdded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainStatus {
    Followed,
    Dropped,
    Banned,
}

impl ChainStatus {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "followed" => Some(ChainStatus::Followed),
            "dropped" => Some(ChainStatus::Dropped),
            _ => None,
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            ChainStatus::Followed => "followed",
            ChainStatus::Dropped => "dropped",
            ChainStatus::Banned => "banned",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainRegistryEntry {
    pub chain_id: ChainId,
    pub owner: PublicKey,
    pub label: String,
    pub source: EntrySource,
    pub status: ChainStatus,
    pub ban_evidence: Option<EquivocationEvidence>,
}

#[derive(Debug, Clone)]
struct Line {
    owner: PublicKey,
    label: String,
}

/// Effective chain list: user overrides shadow the default list, and the
/// ban list shadows both. Bans are permanent.
#[derive(Debug, Default)]
pub struct ChainRegistry {
    defaults: BTreeMap<ChainId, Line>,
    user: BTreeMap<ChainId, (Line, ChainStatus)>,
    bans: BTreeMap<ChainId, EquivocationEvidence>,
    dir: Option<PathBuf>,
}

fn check_label(label: &str) -> Result<(), StoreError> {
    if label.is_empty() || label.len() > MAX_LABEL_LEN || label.chars().any(char::is_whitespace) {
        return Err(StoreError::InvalidEntry(format!(
            "label must be 1-{MAX_LABEL_LEN} bytes without whitespace"
        )));
    }
    Ok(())
}

fn parse_line(line: &str) -> Result<(ChainId, Line, Option<ChainStatus>), StoreError> {
    let bad = |m: &str| StoreError::InvalidEntry(format!("{m}: {line:?}"));
    let fields: Vec<&str> = line.split_whitespace().collect();
    if !(3..=4).contains(&fields.len()) {
        return Err(bad("expected `chain_id owner_pub label [status]`"));
    }
    let chain_id = ChainId::from_hex(fields[0]).map_err(|_| bad("bad chain id"))?;
    let owner = PublicKey::from_hex(fields[1]).map_err(|_| bad("bad owner key"))?;
    if derive_chain_id(owner.as_bytes()).ok() != Some(chain_id) {
        return Err(bad("chain id does not match owner key"));
    }
    check_label(fields[2])?;
    let status = match fields.get(3) {
        Some(s) => Some(ChainStatus::parse(s).ok_or_else(|| bad("bad status"))?),
        None => None,
    };
    Ok((
        chain_id,
        Line {
            owner,
            label: fields[2].to_string(),
        },
        status,
    ))
}

fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Writes via a temporary file and rename so readers never see a partial
/// list.
fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(tmp, path)
}

impl ChainRegistry {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads the default list, user overrides and bans from `dir`. Missing
    /// files are treated as empty.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir)?;
        let mut reg = Self {
            dir: Some(dir.to_path_buf()),
            ..Self::default()
        };
        if let Some(text) = read_optional(&dir.join(DEFAULT_LIST_FILE))? {
            reg.load_default_list(&text)?;
        }
        if let Some(text) = read_optional(&dir.join(USER_LIST_FILE))? {
            for l in content_lines(&text) {
                let (id, line, status) = parse_line(l)?;
                reg.user.insert(id, (line, status.unwrap_or(ChainStatus::Followed)));
            }
        }
        if let Some(text) = read_optional(&dir.join(BAN_LIST_FILE))? {
            for l in content_lines(&text) {
                let fields: Vec<&str> = l.split_whitespace().collect();
                let [id, a, b] = fields[..] else {
                    return Err(StoreError::Corrupt(format!("bad ban line: {l:?}")));
                };
                let id = ChainId::from_hex(id).map_err(|_| StoreError::Corrupt("bad ban chain id".into()))?;
                let block_a = Block::from_hex(a).map_err(|e| StoreError::Corrupt(e.to_string()))?;
                let block_b = Block::from_hex(b).map_err(|e| StoreError::Corrupt(e.to_string()))?;
                reg.bans.insert(id, EquivocationEvidence { block_a, block_b });
            }
        }
        Ok(reg)
    }

    /// Replaces the default list with the lines of `text`.
    pub fn load_default_list(&mut self, text: &str) -> Result<(), StoreError> {
        let mut defaults = BTreeMap::new();
        for l in content_lines(text) {
            let (id, line, _) = parse_line(l)?;
            defaults.insert(id, line);
        }
        self.defaults = defaults;
        Ok(())
    }

    /// Adds a default-list entry (used by the simulator and by tests).
    pub fn add_default(&mut self, owner: &PublicKey, label: &str) -> Result<ChainId, StoreError> {
        check_label(label)?;
        let id = derive_chain_id(owner.as_bytes()).expect("validated key");
        self.defaults.insert(
            id,
            Line {
                owner: *owner,
                label: label.to_string(),
            },
        );
        Ok(id)
    }

    pub fn follow(&mut self, chain_id: ChainId, owner: &PublicKey, label: &str) -> Result<(), StoreError> {
        if derive_chain_id(owner.as_bytes()).ok() != Some(chain_id) {
            return Err(StoreError::InvalidEntry("owner key does not hash to chain id".into()));
        }
        check_label(label)?;
        if self.bans.contains_key(&chain_id) {
            return Err(StoreError::ChainBanned(chain_id));
        }
        self.user.insert(
            chain_id,
            (
                Line {
                    owner: *owner,
                    label: label.to_string(),
                },
                ChainStatus::Followed,
            ),
        );
        self.persist_user()
    }

    pub fn drop_chain(&mut self, chain_id: &ChainId) -> Result<(), StoreError> {
        let line = match (self.user.get(chain_id), self.defaults.get(chain_id)) {
            (Some((line, _)), _) | (None, Some(line)) => line.clone(),
            (None, None) => return Err(StoreError::UnknownChain(*chain_id)),
        };
        self.user.insert(*chain_id, (line, ChainStatus::Dropped));
        self.persist_user()
    }

    /// Bans a chain. The caller has checked the evidence against the owner.
    pub(crate) fn ban(&mut self, evidence: EquivocationEvidence) -> Result<(), StoreError> {
        let id = *evidence.chain_id();
        if self.bans.contains_key(&id) {
            return Ok(());
        }
        self.bans.insert(id, evidence);
        self.persist_bans()
    }

    pub fn entry(&self, chain_id: &ChainId) -> Option<ChainRegistryEntry> {
        let (line, source, status) = match (self.user.get(chain_id), self.defaults.get(chain_id)) {
            (Some((line, status)), _) => (line, EntrySource::UserAdded, *status),
            (None, Some(line)) => (line, EntrySource::DefaultList, ChainStatus::Followed),
            (None, None) => return None,
        };
        let ban = self.bans.get(chain_id).cloned();
        Some(ChainRegistryEntry {
            chain_id: *chain_id,
            owner: line.owner,
            label: line.label.clone(),
            source,
            status: if ban.is_some() { ChainStatus::Banned } else { status },
            ban_evidence: ban,
        })
    }

    pub fn list(&self, filter: Option<ChainStatus>) -> Vec<ChainRegistryEntry> {
        let mut ids: Vec<&ChainId> = self.defaults.keys().chain(self.user.keys()).collect();
        ids.sort();
        ids.dedup();
        ids.into_iter()
            .filter_map(|id| self.entry(id))
            .filter(|e| filter.is_none_or(|f| e.status == f))
            .collect()
    }

    pub fn owner_of(&self, chain_id: &ChainId) -> Option<PublicKey> {
        self.user
            .get(chain_id)
            .map(|(l, _)| l.owner)
            .or_else(|| self.defaults.get(chain_id).map(|l| l.owner))
    }

    pub fn status(&self, chain_id: &ChainId) -> Option<ChainStatus> {
        self.entry(chain_id).map(|e| e.status)
    }

    pub fn is_banned(&self, chain_id: &ChainId) -> bool {
        self.bans.contains_key(chain_id)
    }

    pub fn followed_ids(&self) -> Vec<ChainId> {
        self.list(Some(ChainStatus::Followed))
            .into_iter()
            .map(|e| e.chain_id)
            .collect()
    }

    fn persist_user(&self) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut out = String::from("# chain_id owner_pub label status\n");
        for (id, (line, status)) in &self.user {
            out.push_str(&format!("{} {} {} {}\n", id, line.owner, line.label, status.as_str()));
        }
        write_atomic(&dir.join(USER_LIST_FILE), &out)?;
        Ok(())
    }

    fn persist_bans(&self) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut out = String::from("# chain_id block_a block_b\n");
        for (id, ev) in &self.bans {
            out.push_str(&format!("{} {} {}\n", id, ev.block_a.to_hex(), ev.block_b.to_hex()));
        }
        write_atomic(&dir.join(BAN_LIST_FILE), &out)?;
        Ok(())
    }
}

fn read_optional(path: &Path) -> io::Result<Option<String>> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

/// Renders entries in the default-list line format.
pub fn render_default_list(entries: &[(PublicKey, String)]) -> String {
    entries
        .iter()
        .map(|(k, label)| {
            format!(
                "{} {} {}\n",
                derive_chain_id(k.as_bytes()).expect("validated key"),
                k,
                label
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaincore::generate_keypair;

    fn key(n: u8) -> PublicKey {
        *generate_keypair(Some([n; 32])).unwrap().public_key()
    }

    #[test]
    fn user_drop_overrides_default() {
        let mut reg = ChainRegistry::in_memory();
        let x = reg.add_default(&key(1), "news").unwrap();
        assert_eq!(reg.followed_ids(), vec![x]);
        reg.drop_chain(&x).unwrap();
        assert!(reg.followed_ids().is_empty());
        let e = reg.entry(&x).unwrap();
        assert_eq!(e.source, EntrySource::UserAdded);
        assert_eq!(e.status, ChainStatus::Dropped);
    }

    #[test]
    fn follow_with_mismatched_key_is_invalid() {
        let mut reg = ChainRegistry::in_memory();
        let id = derive_chain_id(key(1).as_bytes()).unwrap();
        assert!(matches!(reg.follow(id, &key(2), "x"), Err(StoreError::InvalidEntry(_))));
    }

    #[test]
    fn last_write_wins() {
        let mut reg = ChainRegistry::in_memory();
        let k = key(3);
        let id = derive_chain_id(k.as_bytes()).unwrap();
        reg.follow(id, &k, "a").unwrap();
        reg.drop_chain(&id).unwrap();
        reg.follow(id, &k, "a").unwrap();
        assert_eq!(reg.status(&id), Some(ChainStatus::Followed));
    }

    #[test]
    fn drop_unknown_chain() {
        let mut reg = ChainRegistry::in_memory();
        assert!(matches!(
            reg.drop_chain(&ChainId([1; 32])),
            Err(StoreError::UnknownChain(_))
        ));
    }

    #[test]
    fn files_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let k1 = key(4);
        let k2 = key(5);
        fs::write(
            dir.path().join(DEFAULT_LIST_FILE),
            render_default_list(&[(k1, "one".into()), (k2, "two".into())]),
        )
        .unwrap();
        let id1 = derive_chain_id(k1.as_bytes()).unwrap();
        {
            let mut reg = ChainRegistry::open(dir.path()).unwrap();
            assert_eq!(reg.list(None).len(), 2);
            reg.drop_chain(&id1).unwrap();
        }
        let reg = ChainRegistry::open(dir.path()).unwrap();
        assert_eq!(reg.status(&id1), Some(ChainStatus::Dropped));
        assert_eq!(reg.followed_ids().len(), 1);
    }

    #[test]
    fn rejects_malformed_lines() {
        let mut reg = ChainRegistry::in_memory();
        assert!(reg.load_default_list("deadbeef 02 x").is_err());
        let k = key(6);
        let wrong = format!("{} {} label\n", ChainId([0; 32]), k);
        assert!(reg.load_default_list(&wrong).is_err());
    }
}
