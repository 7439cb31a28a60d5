use std::sync::Arc;

use crate::chaincore::{Block, ChainId, EquivocationEvidence, Rejection};
use crate::chainstore::{AppendOutcome, ChainStatus, ChainStore, StoreError};
use crate::wire::{LocalView, NodeKind, MAX_BLOCKS_PER_MESSAGE, PROTOCOL_VERSION};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AcceptOutcome {
    Appended,
    Duplicate,
    /// Verified, but the local head is below `expected - 1`.
    Gap {
        expected: u64,
    },
    Equivocation(Box<EquivocationEvidence>),
    Rejected(Rejection),
    /// Chain is unknown, dropped or banned; the block is neither kept nor
    /// held against the sender.
    Ignored,
}

/// Block storage as seen by the peer protocol. Full nodes back it with a
/// [`ChainStore`]; light nodes with a bounded cache.
pub trait Ledger {
    fn kind(&self) -> NodeKind;

    fn local_view(&self) -> LocalView;

    /// Followed and not banned.
    fn is_relayable(&self, chain_id: &ChainId) -> bool;

    fn is_banned(&self, chain_id: &ChainId) -> bool;

    fn head(&self, chain_id: &ChainId) -> Option<u64>;

    fn accept_block(&mut self, block: Block) -> AcceptOutcome;

    /// Blocks for a peer's `get_blocks`, or `None` when this node does not
    /// serve history.
    fn blocks_for_peer(&self, chain_id: &ChainId, from: u64, to: u64) -> Option<Vec<Block>>;

    /// First height worth requesting from a peer whose head is `peer_head`.
    fn sync_start(&self, chain_id: &ChainId, peer_head: u64) -> Option<u64> {
        match self.head(chain_id) {
            Some(h) if h >= peer_head => None,
            Some(h) => Some(h + 1),
            None => Some(0),
        }
    }
}

impl<L: Ledger + ?Sized> Ledger for Box<L> {
    fn kind(&self) -> NodeKind {
        (**self).kind()
    }
    fn local_view(&self) -> LocalView {
        (**self).local_view()
    }
    fn is_relayable(&self, chain_id: &ChainId) -> bool {
        (**self).is_relayable(chain_id)
    }
    fn is_banned(&self, chain_id: &ChainId) -> bool {
        (**self).is_banned(chain_id)
    }
    fn head(&self, chain_id: &ChainId) -> Option<u64> {
        (**self).head(chain_id)
    }
    fn accept_block(&mut self, block: Block) -> AcceptOutcome {
        (**self).accept_block(block)
    }
    fn blocks_for_peer(&self, chain_id: &ChainId, from: u64, to: u64) -> Option<Vec<Block>> {
        (**self).blocks_for_peer(chain_id, from, to)
    }
    fn sync_start(&self, chain_id: &ChainId, peer_head: u64) -> Option<u64> {
        (**self).sync_start(chain_id, peer_head)
    }
}

impl Ledger for Arc<ChainStore> {
    fn kind(&self) -> NodeKind {
        NodeKind::Full
    }

    fn local_view(&self) -> LocalView {
        let followed = self.registry().followed_ids();
        let mut view = LocalView::new(NodeKind::Full);
        view.protocol_version = PROTOCOL_VERSION;
        for id in &followed {
            if let Some(h) = self.head_height(id) {
                view.heads.insert(*id, h);
            }
        }
        view.followed = followed.into_iter().collect();
        view
    }

    fn is_relayable(&self, chain_id: &ChainId) -> bool {
        self.registry().status(chain_id) == Some(ChainStatus::Followed)
    }

    fn is_banned(&self, chain_id: &ChainId) -> bool {
        self.registry().is_banned(chain_id)
    }

    fn head(&self, chain_id: &ChainId) -> Option<u64> {
        self.head_height(chain_id)
    }

    fn accept_block(&mut self, block: Block) -> AcceptOutcome {
        let chain_id = block.chain_id;
        match self.append_block(&chain_id, block) {
            Ok(AppendOutcome::Appended) => AcceptOutcome::Appended,
            Ok(AppendOutcome::Duplicate) => AcceptOutcome::Duplicate,
            Err(StoreError::Gap { expected, .. }) => AcceptOutcome::Gap { expected },
            Err(StoreError::Equivocation(e)) => AcceptOutcome::Equivocation(e),
            Err(StoreError::Rejected(r)) => AcceptOutcome::Rejected(r),
            Err(e) => {
                if !matches!(
                    e,
                    StoreError::UnknownChain(_) | StoreError::NotFollowed(_) | StoreError::ChainBanned(_)
                ) {
                    tracing::warn!(chain = %chain_id, error = %e, "append failed");
                }
                AcceptOutcome::Ignored
            }
        }
    }

    fn blocks_for_peer(&self, chain_id: &ChainId, from: u64, to: u64) -> Option<Vec<Block>> {
        if self.registry().status(chain_id) == Some(ChainStatus::Dropped) {
            return Some(Vec::new());
        }
        let to = to.min(from.saturating_add(MAX_BLOCKS_PER_MESSAGE as u64 - 1));
        Some(self.get_range(chain_id, from, to).unwrap_or_default())
    }
}
