use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::wire::NodeKind;

pub type NodeId = usize;

const NS_PER_SEC: f64 = 1e9;
const NS_PER_MS: f64 = 1e6;

/// One-way latency plus serialization rate of a link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub latency_ms: f64,
    pub bandwidth_bytes_per_s: f64,
}

impl LinkParams {
    /// Parameters whose per-hop time for a `size`-byte message is
    /// `latency_ms + transfer_ms`.
    pub fn calibrated(latency_ms: f64, size: usize, transfer_ms: f64) -> Self {
        Self {
            latency_ms,
            bandwidth_bytes_per_s: size as f64 * 1000.0 / transfer_ms,
        }
    }

    /// Time to clock `bytes` onto the link.
    pub fn serialization_ns(&self, bytes: usize) -> u64 {
        (bytes as f64 * NS_PER_SEC / self.bandwidth_bytes_per_s).round() as u64
    }

    pub fn latency_ns(&self) -> u64 {
        (self.latency_ms * NS_PER_MS).round() as u64
    }

    /// Time for one `bytes`-byte message over an idle link.
    pub fn hop_ns(&self, bytes: usize) -> u64 {
        self.latency_ns() + self.serialization_ns(bytes)
    }

    fn check(&self) -> Result<(), SimError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.latency_ms) && ok(self.bandwidth_bytes_per_s) {
            Ok(())
        } else {
            Err(SimError::BadLink(format!(
                "latency {} ms, bandwidth {} B/s must both be positive",
                self.latency_ms, self.bandwidth_bytes_per_s
            )))
        }
    }
}

/// Named link calibrations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// 1 MiB over one hop takes 1.46 s: 100 ms latency plus 1.36 s transfer.
    Wan,
    /// 1 MiB over one hop takes 0.65 s: 50 ms latency plus 0.6 s transfer.
    StarHub,
    /// 1 ms latency, 100 MB/s.
    Lan,
}

pub const MIB: usize = 1 << 20;

impl Profile {
    pub fn params(self) -> LinkParams {
        match self {
            Profile::Wan => LinkParams::calibrated(100.0, MIB, 1360.0),
            Profile::StarHub => LinkParams::calibrated(50.0, MIB, 600.0),
            Profile::Lan => LinkParams {
                latency_ms: 1.0,
                bandwidth_bytes_per_s: 100e6,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Wan => "wan",
            Profile::StarHub => "star-hub",
            Profile::Lan => "lan",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Profile::Wan, Profile::StarHub, Profile::Lan]
            .into_iter()
            .find(|p| p.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub node_id: NodeId,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    #[serde(flatten)]
    pub params: LinkParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Star,
    Linear,
}

/// Undirected, connected network with one chain owner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<Link>,
    pub owner: NodeId,
}

impl Topology {
    /// Validates and builds a topology. Node ids must be `0..n`.
    pub fn custom(nodes: Vec<NodeSpec>, links: Vec<Link>, owner: NodeId) -> Result<Self, SimError> {
        let t = Self { nodes, links, owner };
        t.validate()?;
        Ok(t)
    }

    /// Star: node 0 is the hub and the owner sits on leaf 1.
    /// Linear: a path `0 - 1 - ... - n-1` owned by node 0.
    pub fn build(kind: TopologyKind, n: usize, params: LinkParams) -> Result<Self, SimError> {
        if n < 2 {
            return Err(SimError::TooFewNodes(n));
        }
        let link = |a, b| Link { a, b, params };
        let (links, owner) = match kind {
            TopologyKind::Star => ((1..n).map(|i| link(0, i)).collect(), 1),
            TopologyKind::Linear => ((1..n).map(|i| link(i - 1, i)).collect(), 0),
        };
        Self::custom(full_nodes(n), links, owner)
    }

    /// Random connected graph: a random spanning tree plus `extra` random
    /// chords, all with `params`.
    pub fn random_connected<R: Rng>(rng: &mut R, n: usize, extra: usize, params: LinkParams) -> Result<Self, SimError> {
        if n < 2 {
            return Err(SimError::TooFewNodes(n));
        }
        let mut order: Vec<NodeId> = (0..n).collect();
        order.shuffle(rng);
        let mut edges = BTreeSet::new();
        for i in 1..n {
            let parent = order[rng.gen_range(0..i)];
            edges.insert(ordered(order[i], parent));
        }
        let possible = n * (n - 1) / 2;
        let mut budget = extra.min(possible - edges.len());
        while budget > 0 {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b && edges.insert(ordered(a, b)) {
                budget -= 1;
            }
        }
        let links = edges.into_iter().map(|(a, b)| Link { a, b, params }).collect();
        Self::custom(full_nodes(n), links, rng.gen_range(0..n))
    }

    /// Every pair connected.
    pub fn complete(n: usize, params: LinkParams) -> Result<Self, SimError> {
        if n < 2 {
            return Err(SimError::TooFewNodes(n));
        }
        let mut links = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                links.push(Link { a, b, params });
            }
        }
        Self::custom(full_nodes(n), links, 0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.nodes.len();
        if n < 2 {
            return Err(SimError::TooFewNodes(n));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.node_id != i {
                return Err(SimError::BadNode(format!("node at index {i} has id {}", node.node_id)));
            }
        }
        match self.nodes.get(self.owner) {
            Some(o) if o.kind == NodeKind::Full => {}
            Some(_) => return Err(SimError::BadNode("owner must be a full node".into())),
            None => return Err(SimError::BadNode(format!("owner {} is not a node", self.owner))),
        }
        let mut seen = BTreeSet::new();
        for l in &self.links {
            if l.a >= n || l.b >= n || l.a == l.b {
                return Err(SimError::BadLink(format!("{} - {}", l.a, l.b)));
            }
            if !seen.insert(ordered(l.a, l.b)) {
                return Err(SimError::BadLink(format!("duplicate link {} - {}", l.a, l.b)));
            }
            l.params.check()?;
        }
        if self.hop_counts(0).iter().any(Option::is_none) {
            return Err(SimError::Disconnected);
        }
        Ok(())
    }

    pub fn neighbors(&self) -> Vec<BTreeMap<NodeId, LinkParams>> {
        let mut adj = vec![BTreeMap::new(); self.nodes.len()];
        for l in &self.links {
            adj[l.a].insert(l.b, l.params);
            adj[l.b].insert(l.a, l.params);
        }
        adj
    }

    /// Breadth-first hop distance from `from`; `None` when unreachable.
    pub fn hop_counts(&self, from: NodeId) -> Vec<Option<usize>> {
        let adj = self.neighbors();
        let mut dist = vec![None; self.nodes.len()];
        let mut queue = VecDeque::from([from]);
        dist[from] = Some(0);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for &v in adj[u].keys() {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Longest shortest path, in hops.
    pub fn diameter(&self) -> usize {
        (0..self.nodes.len())
            .flat_map(|s| self.hop_counts(s))
            .flatten()
            .max()
            .unwrap_or(0)
    }

    /// Shortest-path time from the owner for a `bytes`-byte message over
    /// idle links.
    pub fn analytic_receipt_ns(&self, bytes: usize) -> Vec<u64> {
        let adj = self.neighbors();
        let mut dist = vec![u64::MAX; self.nodes.len()];
        let mut done = vec![false; self.nodes.len()];
        dist[self.owner] = 0;
        for _ in 0..self.nodes.len() {
            let Some(u) = (0..dist.len())
                .filter(|&i| !done[i] && dist[i] != u64::MAX)
                .min_by_key(|&i| dist[i])
            else {
                break;
            };
            done[u] = true;
            for (&v, p) in &adj[u] {
                dist[v] = dist[v].min(dist[u] + p.hop_ns(bytes));
            }
        }
        dist
    }
}

fn full_nodes(n: usize) -> Vec<NodeSpec> {
    (0..n)
        .map(|node_id| NodeSpec {
            node_id,
            kind: NodeKind::Full,
        })
        .collect()
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}
