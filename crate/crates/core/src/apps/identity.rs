use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use super::forum::for_each_valid_record;
use super::{AuthorKey, ChainRecord, RecordBody, RecordVerifier};
use crate::chaincore::Block;
use crate::chainstore::Projection;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NameEntry {
    pub pub_key: AuthorKey,
    pub block_height: u64,
    pub profile: Option<String>,
}

/// Name directory of one identity chain. A name belongs to whoever
/// registered it first; each key holds at most one name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdentityState {
    pub names: BTreeMap<String, NameEntry>,
    pub reverse: BTreeMap<AuthorKey, String>,
}

impl IdentityState {
    pub fn apply_record(&mut self, height: u64, record: &ChainRecord) {
        let RecordBody::Identity { name, profile } = &record.body else {
            return;
        };
        let key = record.author_pub;
        if let Some(entry) = self.names.get_mut(name) {
            if entry.pub_key == key {
                entry.profile = profile.clone();
            }
            return;
        }
        if let Some(old) = self.reverse.insert(key, name.clone()) {
            self.names.remove(&old);
        }
        self.names.insert(
            name.clone(),
            NameEntry {
                pub_key: key,
                block_height: height,
                profile: profile.clone(),
            },
        );
    }

    pub fn resolve(&self, name: &str) -> Option<&NameEntry> {
        self.names.get(name)
    }

    pub fn name_of(&self, key: &AuthorKey) -> Option<&str> {
        self.reverse.get(key).map(String::as_str)
    }
}

#[derive(Clone, Default)]
pub struct IdentityProjection {
    verifier: Option<Arc<RecordVerifier>>,
}

impl IdentityProjection {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_verifier(mut self, verifier: Arc<RecordVerifier>) -> Self {
        self.verifier = Some(verifier);
        self
    }
}

impl Projection for IdentityProjection {
    type State = IdentityState;

    fn initial(&self) -> IdentityState {
        IdentityState::default()
    }

    fn apply(&self, state: &mut IdentityState, block: &Block) {
        for_each_valid_record(block, self.verifier.as_deref(), |r| state.apply_record(block.height, r));
    }
}

pub fn project_identity<'a>(blocks: impl IntoIterator<Item = &'a Block>) -> IdentityState {
    let p = IdentityProjection::new();
    let mut state = p.initial();
    for b in blocks {
        p.apply(&mut state, b);
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::make_identity;
    use crate::chaincore::{generate_keypair, KeyPair};

    fn key(n: u8) -> KeyPair {
        generate_keypair(Some([n; 32])).unwrap()
    }

    #[test]
    fn first_registration_wins() {
        let mut s = IdentityState::default();
        let (a, b) = (key(1), key(2));
        s.apply_record(1, &make_identity(&a, "alice", None).unwrap());
        s.apply_record(2, &make_identity(&b, "alice", None).unwrap());
        let e = s.resolve("alice").unwrap();
        assert_eq!(e.pub_key, a.public_key().into());
        assert_eq!(e.block_height, 1);
        assert_eq!(s.name_of(&b.public_key().into()), None);
    }

    #[test]
    fn rename_releases_old_name() {
        let mut s = IdentityState::default();
        let (a, b) = (key(1), key(2));
        s.apply_record(1, &make_identity(&a, "alice", None).unwrap());
        s.apply_record(2, &make_identity(&a, "alicia", None).unwrap());
        assert!(s.resolve("alice").is_none());
        assert_eq!(s.name_of(&a.public_key().into()), Some("alicia"));
        s.apply_record(3, &make_identity(&b, "alice", None).unwrap());
        assert_eq!(s.resolve("alice").unwrap().pub_key, b.public_key().into());
    }

    #[test]
    fn rename_to_claimed_name_is_ignored() {
        let mut s = IdentityState::default();
        let (a, b) = (key(1), key(2));
        s.apply_record(1, &make_identity(&a, "alice", None).unwrap());
        s.apply_record(1, &make_identity(&b, "bob", None).unwrap());
        s.apply_record(2, &make_identity(&b, "alice", None).unwrap());
        assert_eq!(s.name_of(&b.public_key().into()), Some("bob"));
        assert_eq!(s.resolve("alice").unwrap().pub_key, a.public_key().into());
    }

    #[test]
    fn owner_updates_profile() {
        let mut s = IdentityState::default();
        let a = key(1);
        s.apply_record(1, &make_identity(&a, "alice", None).unwrap());
        s.apply_record(4, &make_identity(&a, "alice", Some("hi")).unwrap());
        let e = s.resolve("alice").unwrap();
        assert_eq!(e.profile.as_deref(), Some("hi"));
        assert_eq!(e.block_height, 1);
    }
}
