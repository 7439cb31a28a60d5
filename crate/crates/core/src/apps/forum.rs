use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use super::{decode_payload_lenient, verify_record, AuthorKey, ChainRecord, RecordBody, RecordVerifier};
use crate::chaincore::{Block, Hash256, PublicKey};
use crate::chainstore::Projection;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PostEntry {
    pub record: ChainRecord,
    pub visible: bool,
    pub block_height: u64,
    /// Set when `reply_to` names a post not seen so far.
    pub unresolved_reply: bool,
}

/// Posts of one chain with their reply graph and soft-delete state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ForumState {
    pub posts: BTreeMap<Hash256, PostEntry>,
    /// Parent post id to replies, in chain order.
    pub threads: BTreeMap<Hash256, Vec<Hash256>>,
    /// Post ids in chain order.
    pub order: Vec<Hash256>,
    /// Deletes seen earlier in the current block for posts not yet seen.
    pending_deletes: BTreeMap<Hash256, Vec<AuthorKey>>,
    pending_height: u64,
}

impl ForumState {
    /// Applies one record that has already passed verification.
    pub fn apply_record(&mut self, owner: &AuthorKey, height: u64, record: &ChainRecord) {
        if height != self.pending_height {
            self.pending_deletes.clear();
            self.pending_height = height;
        }
        match &record.body {
            RecordBody::Post { post_id, reply_to, .. } => {
                if self.posts.contains_key(post_id) {
                    return;
                }
                let hidden = self
                    .pending_deletes
                    .get(post_id)
                    .is_some_and(|authors| authors.iter().any(|a| a == owner || *a == record.author_pub));
                let mut unresolved_reply = false;
                if let Some(parent) = reply_to {
                    unresolved_reply = !self.posts.contains_key(parent);
                    self.threads.entry(*parent).or_default().push(*post_id);
                }
                if let Some(children) = self.threads.get(post_id) {
                    for child in children {
                        if let Some(c) = self.posts.get_mut(child) {
                            c.unresolved_reply = false;
                        }
                    }
                }
                self.posts.insert(
                    *post_id,
                    PostEntry {
                        record: record.clone(),
                        visible: !hidden,
                        block_height: height,
                        unresolved_reply,
                    },
                );
                self.order.push(*post_id);
            }
            RecordBody::DeleteMarker { target } => match self.posts.get_mut(target) {
                Some(entry) => {
                    if record.author_pub == *owner || record.author_pub == entry.record.author_pub {
                        entry.visible = false;
                    }
                }
                None => self.pending_deletes.entry(*target).or_default().push(record.author_pub),
            },
            RecordBody::Identity { .. } => {}
        }
    }

    pub fn post(&self, id: &Hash256) -> Option<&PostEntry> {
        self.posts.get(id)
    }

    /// Posts in chain order whose block height is strictly above `height`.
    pub fn posts_after(&self, height: Option<u64>) -> impl Iterator<Item = &PostEntry> {
        self.order
            .iter()
            .filter_map(|id| self.posts.get(id))
            .filter(move |p| height.is_none_or(|h| p.block_height > h))
    }

    pub fn replies(&self, id: &Hash256) -> &[Hash256] {
        self.threads.get(id).map_or(&[], Vec::as_slice)
    }
}

/// Forum fold for one chain. Blocks at height 0 carry the genesis label and
/// are skipped; records that fail to decode or verify are skipped.
#[derive(Clone)]
pub struct ForumProjection {
    owner: AuthorKey,
    verifier: Option<Arc<RecordVerifier>>,
}

impl ForumProjection {
    pub fn new(owner: &PublicKey) -> Self {
        Self {
            owner: owner.into(),
            verifier: None,
        }
    }

    pub fn with_verifier(mut self, verifier: Arc<RecordVerifier>) -> Self {
        self.verifier = Some(verifier);
        self
    }
}

impl Projection for ForumProjection {
    type State = ForumState;

    fn initial(&self) -> ForumState {
        ForumState::default()
    }

    fn apply(&self, state: &mut ForumState, block: &Block) {
        for_each_valid_record(block, self.verifier.as_deref(), |r| {
            state.apply_record(&self.owner, block.height, r)
        });
    }
}

pub(super) fn for_each_valid_record(block: &Block, verifier: Option<&RecordVerifier>, mut f: impl FnMut(&ChainRecord)) {
    if block.is_genesis() {
        return;
    }
    let Ok(items) = decode_payload_lenient(&block.payload) else {
        return;
    };
    for record in items.into_iter().flatten() {
        let ok = match verifier {
            Some(v) => v.verify(&record).is_ok(),
            None => verify_record(&record).is_ok(),
        };
        if ok {
            f(&record);
        }
    }
}

pub fn project_forum<'a>(blocks: impl IntoIterator<Item = &'a Block>, chain_owner: &PublicKey) -> ForumState {
    let p = ForumProjection::new(chain_owner);
    let mut state = p.initial();
    for b in blocks {
        p.apply(&mut state, b);
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::{encode_payload, make_delete, make_post};
    use crate::chaincore::{generate_keypair, genesis_payload, seal_block, BlockDraft, KeyPair};

    struct Chain {
        owner: KeyPair,
        blocks: Vec<Block>,
    }

    impl Chain {
        fn new() -> Self {
            let owner = generate_keypair(Some([0x31; 32])).unwrap();
            let g = seal_block(
                BlockDraft {
                    chain_id: owner.chain_id(),
                    height: 0,
                    time: 1,
                    prev_hash: Hash256::ZERO,
                    payload: genesis_payload(owner.public_key(), "forum"),
                },
                &owner,
            )
            .unwrap();
            Self { owner, blocks: vec![g] }
        }

        fn push_raw(&mut self, payload: Vec<u8>) {
            let prev = self.blocks.last().unwrap();
            let b = seal_block(
                BlockDraft {
                    chain_id: self.owner.chain_id(),
                    height: prev.height + 1,
                    time: prev.time + 1,
                    prev_hash: prev.hash,
                    payload,
                },
                &self.owner,
            )
            .unwrap();
            self.blocks.push(b);
        }

        fn push(&mut self, records: &[ChainRecord]) {
            self.push_raw(encode_payload(records).unwrap());
        }

        fn project(&self) -> ForumState {
            project_forum(&self.blocks, self.owner.public_key())
        }
    }

    #[test]
    fn owner_soft_delete_keeps_post() {
        let mut c = Chain::new();
        let user = generate_keypair(Some([0x41; 32])).unwrap();
        let post = make_post(&user, "speech", None, 10).unwrap();
        let id = post.post_id().unwrap();
        c.push(std::slice::from_ref(&post));
        let del = make_delete(&c.owner, id);
        c.push(&[del]);
        let state = c.project();
        let entry = state.post(&id).unwrap();
        assert!(!entry.visible);
        assert_eq!(entry.record, post);
        assert_eq!(entry.block_height, 1);
    }

    #[test]
    fn author_may_delete_but_stranger_may_not() {
        let mut c = Chain::new();
        let alice = generate_keypair(Some([0x41; 32])).unwrap();
        let mallory = generate_keypair(Some([0x42; 32])).unwrap();
        let a = make_post(&alice, "a", None, 1).unwrap();
        let b = make_post(&alice, "b", None, 2).unwrap();
        c.push(&[a.clone(), b.clone()]);
        c.push(&[
            make_delete(&mallory, a.post_id().unwrap()),
            make_delete(&alice, b.post_id().unwrap()),
        ]);
        let s = c.project();
        assert!(s.post(&a.post_id().unwrap()).unwrap().visible);
        assert!(!s.post(&b.post_id().unwrap()).unwrap().visible);
    }

    #[test]
    fn delete_in_same_block_before_post_applies() {
        let mut c = Chain::new();
        let alice = generate_keypair(Some([0x41; 32])).unwrap();
        let p = make_post(&alice, "p", None, 1).unwrap();
        c.push(&[make_delete(&alice, p.post_id().unwrap()), p.clone()]);
        assert!(!c.project().post(&p.post_id().unwrap()).unwrap().visible);
    }

    #[test]
    fn delete_in_earlier_block_does_not_apply() {
        let mut c = Chain::new();
        let alice = generate_keypair(Some([0x41; 32])).unwrap();
        let p = make_post(&alice, "p", None, 1).unwrap();
        c.push(&[make_delete(&alice, p.post_id().unwrap())]);
        c.push(std::slice::from_ref(&p));
        assert!(c.project().post(&p.post_id().unwrap()).unwrap().visible);
    }

    #[test]
    fn dangling_reply_is_flagged_then_resolved() {
        let mut c = Chain::new();
        let alice = generate_keypair(Some([0x41; 32])).unwrap();
        let ghost = Hash256([9; 32]);
        let r = make_post(&alice, "re", Some(ghost), 1).unwrap();
        c.push(std::slice::from_ref(&r));
        let s = c.project();
        assert!(s.post(&r.post_id().unwrap()).unwrap().unresolved_reply);
        assert_eq!(s.replies(&ghost), &[r.post_id().unwrap()]);

        let root = make_post(&alice, "root", None, 0).unwrap();
        let child = make_post(&alice, "child", root.post_id(), 1).unwrap();
        let mut c = Chain::new();
        c.push(&[root.clone(), child.clone()]);
        let s = c.project();
        assert!(!s.post(&child.post_id().unwrap()).unwrap().unresolved_reply);
        assert_eq!(s.replies(&root.post_id().unwrap()), &[child.post_id().unwrap()]);
    }

    #[test]
    fn invalid_records_are_skipped() {
        let mut c = Chain::new();
        let alice = generate_keypair(Some([0x41; 32])).unwrap();
        let good = make_post(&alice, "good", None, 1).unwrap();
        let mut bad = make_post(&alice, "bad", None, 2).unwrap();
        bad.author_sig.0[5] ^= 1;
        c.push(&[bad, good.clone()]);
        c.push_raw(b"not json".to_vec());
        let s = c.project();
        assert_eq!(s.order, vec![good.post_id().unwrap()]);
        assert_eq!(s.posts_after(Some(0)).count(), 1);
        assert_eq!(s.posts_after(Some(1)).count(), 0);
    }
}
