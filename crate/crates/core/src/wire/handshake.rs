use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{NodeKind, WireError, WireMessage, PROTOCOL_VERSION};
use crate::chaincore::ChainId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainHead {
    pub chain_id: ChainId,
    pub height: u64,
}

/// Body of `hello` and `hello_ack`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hello {
    pub protocol_version: u32,
    pub node_kind: NodeKind,
    /// Heads of non-empty local chains.
    pub chain_heads: Vec<ChainHead>,
}

/// What one side knows about itself when a session opens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalView {
    pub protocol_version: u32,
    pub kind: NodeKind,
    pub followed: BTreeSet<ChainId>,
    pub heads: BTreeMap<ChainId, u64>,
}

impl LocalView {
    pub fn new(kind: NodeKind) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION,
            kind,
            followed: BTreeSet::new(),
            heads: BTreeMap::new(),
        }
    }

    pub fn hello(&self) -> Hello {
        Hello {
            protocol_version: self.protocol_version,
            node_kind: self.kind,
            chain_heads: self
                .heads
                .iter()
                .map(|(chain_id, height)| ChainHead {
                    chain_id: *chain_id,
                    height: *height,
                })
                .collect(),
        }
    }

    /// Initiator side: the opening frame.
    pub fn initiate(&self) -> WireMessage {
        WireMessage::Hello(self.hello())
    }

    /// Responder side: checks the peer's `hello` and produces the ack.
    pub fn respond(&self, peer: &Hello) -> Result<(WireMessage, SessionInfo), WireError> {
        let info = self.session_with(peer)?;
        Ok((WireMessage::HelloAck(self.hello()), info))
    }

    /// Initiator side: consumes the `hello_ack`.
    pub fn complete(&self, ack: &WireMessage) -> Result<SessionInfo, WireError> {
        match ack {
            WireMessage::HelloAck(h) => self.session_with(h),
            WireMessage::Error { code, detail } => {
                Err(WireError::Unexpected(format!("peer refused: {code}: {detail}")))
            }
            other => Err(WireError::Unexpected(format!(
                "expected hello_ack, got {}",
                other.type_name()
            ))),
        }
    }

    pub fn session_with(&self, peer: &Hello) -> Result<SessionInfo, WireError> {
        if peer.protocol_version != self.protocol_version {
            return Err(WireError::VersionMismatch {
                local: self.protocol_version,
                peer: peer.protocol_version,
            });
        }
        let peer_heads: BTreeMap<ChainId, u64> = peer.chain_heads.iter().map(|h| (h.chain_id, h.height)).collect();
        let sync_candidates = peer_heads
            .iter()
            .filter(|(id, _)| self.followed.contains(id))
            .filter_map(|(id, &peer_head)| {
                let from = match self.heads.get(id) {
                    Some(&local) if local >= peer_head => return None,
                    Some(&local) => local + 1,
                    None => 0,
                };
                Some(SyncCandidate {
                    chain_id: *id,
                    from,
                    peer_head,
                })
            })
            .collect();
        Ok(SessionInfo {
            peer_kind: peer.node_kind,
            peer_heads,
            sync_candidates,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncCandidate {
    pub chain_id: ChainId,
    /// First height to request.
    pub from: u64,
    pub peer_head: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionInfo {
    pub peer_kind: NodeKind,
    pub peer_heads: BTreeMap<ChainId, u64>,
    /// Chains the local side follows on which the peer is ahead.
    pub sync_candidates: Vec<SyncCandidate>,
}

/// Runs both halves of the handshake in memory and returns
/// `(initiator's view of responder, responder's view of initiator)`.
#[allow(clippy::result_large_err)]
pub fn handshake(initiator: &LocalView, responder: &LocalView) -> Result<(SessionInfo, SessionInfo), WireMessage> {
    let WireMessage::Hello(hello) = initiator.initiate() else {
        unreachable!("initiate always yields hello");
    };
    let (ack, responder_info) = responder.respond(&hello).map_err(|e| e.to_message())?;
    let initiator_info = initiator.complete(&ack).map_err(|e| e.to_message())?;
    Ok((initiator_info, responder_info))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(kind: NodeKind, heads: &[(ChainId, u64)], followed: &[ChainId]) -> LocalView {
        let mut v = LocalView::new(kind);
        v.heads = heads.iter().copied().collect();
        v.followed = followed.iter().copied().collect();
        v
    }

    #[test]
    fn behind_full_node_syncs_from_next_height() {
        let x = ChainId([1; 32]);
        let a = view(NodeKind::Full, &[(x, 10)], &[x]);
        let b = view(NodeKind::Full, &[(x, 7)], &[x]);
        let (a_info, b_info) = handshake(&a, &b).unwrap();
        assert!(a_info.sync_candidates.is_empty());
        assert_eq!(
            b_info.sync_candidates,
            vec![SyncCandidate {
                chain_id: x,
                from: 8,
                peer_head: 10
            }]
        );
        assert_eq!(b_info.peer_kind, NodeKind::Full);
    }

    #[test]
    fn empty_light_node_marks_all_followed_chains() {
        let (x, y, z) = (ChainId([1; 32]), ChainId([2; 32]), ChainId([3; 32]));
        let light = view(NodeKind::Light, &[], &[x, y]);
        let full = view(NodeKind::Full, &[(x, 4), (y, 0), (z, 9)], &[x, y, z]);
        let (light_info, full_info) = handshake(&light, &full).unwrap();
        let chains: Vec<_> = light_info
            .sync_candidates
            .iter()
            .map(|c| (c.chain_id, c.from))
            .collect();
        assert_eq!(chains, vec![(x, 0), (y, 0)]);
        assert_eq!(full_info.peer_kind, NodeKind::Light);
        assert!(full_info.sync_candidates.is_empty());
    }

    #[test]
    fn version_mismatch_rejected_with_error_frame() {
        let a = view(NodeKind::Full, &[], &[]);
        let mut b = view(NodeKind::Full, &[], &[]);
        b.protocol_version = 2;
        match handshake(&a, &b) {
            Err(WireMessage::Error { code, .. }) => assert_eq!(code, "version-mismatch"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
