use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::{Simulation, DEFAULT_LIGHT_CACHE_DEPTH};
use super::topology::{Link, LinkParams, NodeId, NodeSpec, Profile, Topology, TopologyKind, MIB};
use super::SimError;
use crate::apps::{encode_payload, encoded_payload_len, make_post};
use crate::chaincore::{generate_keypair, HEADER_LEN, SIGNATURE_LEN};

const BLOCK_OVERHEAD: usize = HEADER_LEN + SIGNATURE_LEN;
const NS_PER_MS: f64 = 1e6;
const MAX_EVENTS: u64 = 50_000_000;

/// A payload that makes the sealed block exactly `block_size` bytes: a JSON
/// array holding one filler string. Blocks smaller than the fixed overhead
/// plus `[]` get the empty array.
pub fn filler_payload(block_size: usize) -> Vec<u8> {
    let len = block_size.saturating_sub(BLOCK_OVERHEAD);
    if len < 4 {
        return b"[]".to_vec();
    }
    let mut p = Vec::with_capacity(len);
    p.extend_from_slice(b"[\"");
    p.resize(len - 2, b'x');
    p.extend_from_slice(b"\"]");
    p
}

/// Link parameters: a named calibration or explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Named(String),
    Explicit(LinkParams),
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec::Named(Profile::Wan.name().into())
    }
}

impl ProfileSpec {
    pub fn params(&self) -> Result<LinkParams, SimError> {
        match self {
            ProfileSpec::Named(n) => Profile::from_name(n)
                .map(Profile::params)
                .ok_or_else(|| SimError::UnknownProfile(n.clone())),
            ProfileSpec::Explicit(p) => Ok(*p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomLink {
    pub a: NodeId,
    pub b: NodeId,
    /// Defaults to the scenario profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<LinkParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TopologySpec {
    Star {
        n: usize,
    },
    Linear {
        n: usize,
    },
    Custom {
        nodes: Vec<NodeSpec>,
        links: Vec<CustomLink>,
        owner: NodeId,
    },
}

impl TopologySpec {
    pub fn build(&self, params: LinkParams) -> Result<Topology, SimError> {
        match self {
            TopologySpec::Star { n } => Topology::build(TopologyKind::Star, *n, params),
            TopologySpec::Linear { n } => Topology::build(TopologyKind::Linear, *n, params),
            TopologySpec::Custom { nodes, links, owner } => Topology::custom(
                nodes.clone(),
                links
                    .iter()
                    .map(|l| Link {
                        a: l.a,
                        b: l.b,
                        params: l.params.unwrap_or(params),
                    })
                    .collect(),
                *owner,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Workload {
    /// Serialized size of every produced block.
    pub block_size_bytes: usize,
    pub block_count: usize,
    /// Virtual time between productions.
    pub interval_ms: u64,
    /// Fill blocks with signed posts of this content size instead of a
    /// filler string; blocks then hold as many whole posts as fit.
    pub post_size: Option<usize>,
}

impl Default for Workload {
    fn default() -> Self {
        Self {
            block_size_bytes: MIB,
            block_count: 1,
            interval_ms: 10_000,
            post_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub topology: TopologySpec,
    #[serde(default)]
    pub workload: Workload,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub profile: ProfileSpec,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Scenario(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReceipts {
    pub height: u64,
    pub hash: String,
    pub size_bytes: usize,
    pub posts: usize,
    /// Virtual ms since the start of the measured phase.
    pub produced_ms: f64,
    /// First acceptance time at each node, indexed by node id.
    pub receipt_ms: Vec<Option<f64>>,
    pub max_latency_ms: f64,
    /// Over every node except the owner.
    pub mean_latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub seed: u64,
    pub nodes: usize,
    pub owner: NodeId,
    pub diameter: usize,
    pub blocks: Vec<BlockReceipts>,
    /// Per-block maximum latency, averaged over blocks.
    pub mean_max_latency_ms: f64,
    /// Per-block mean latency, averaged over blocks.
    pub mean_latency_ms: f64,
    /// Posts delivered to every node, divided by the time from the first
    /// production to the last receipt.
    pub posts_per_second: f64,
    pub frames_sent: usize,
    pub bytes_sent: usize,
}

impl ScenarioResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    /// `node_id,block_height,receipt_ms`, one row per node and block.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node_id,block_height,receipt_ms\n");
        for b in &self.blocks {
            for (node, t) in b.receipt_ms.iter().enumerate() {
                let t = t.map(|t| t.to_string()).unwrap_or_default();
                let _ = writeln!(out, "{node},{},{t}", b.height);
            }
        }
        out
    }
}

/// Runs `scenario` to quiescence. The first phase connects every link and
/// syncs the genesis block; the measured phase starts afterwards, and all
/// reported times are relative to it.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioResult, SimError> {
    let params = scenario.profile.params()?;
    let topology = scenario.topology.build(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let owner_key = generate_keypair(Some(rng.gen())).map_err(|e| SimError::Chain(e.to_string()))?;
    let mut sim = Simulation::new(topology, owner_key, DEFAULT_LIGHT_CACHE_DEPTH)?;
    sim.connect_all(MAX_EVENTS)?;
    let epoch = sim.now_ns();
    let w = &scenario.workload;
    let mut posts = Vec::with_capacity(w.block_count);
    for i in 0..w.block_count {
        let (payload, n) = match w.post_size {
            None => (filler_payload(w.block_size_bytes), 0),
            Some(size) => post_payload(&mut rng, w.block_size_bytes, size, i as u64)?,
        };
        posts.push(n);
        sim.schedule_block(epoch + i as u64 * w.interval_ms * 1_000_000, payload);
    }
    sim.run_until_idle(MAX_EVENTS)?;
    Ok(summarize(&sim, epoch, scenario.seed, &posts))
}

fn post_payload(
    rng: &mut ChaCha8Rng,
    block_size: usize,
    content_len: usize,
    block: u64,
) -> Result<(Vec<u8>, usize), SimError> {
    let author = generate_keypair(Some(rng.gen())).map_err(|e| SimError::Chain(e.to_string()))?;
    let budget = block_size.saturating_sub(BLOCK_OVERHEAD);
    let mut records = Vec::new();
    let mut lens = Vec::new();
    loop {
        let content = "p".repeat(content_len.max(1));
        let r = make_post(&author, &content, None, block * 1_000_000 + records.len() as u64)
            .map_err(|e| SimError::Scenario(e.to_string()))?;
        lens.push(r.to_json().len());
        if encoded_payload_len(lens.iter().copied()) > budget {
            break;
        }
        records.push(r);
    }
    let n = records.len();
    let payload = encode_payload(&records).map_err(|e| SimError::Scenario(e.to_string()))?;
    Ok((payload, n))
}

fn summarize(sim: &Simulation, epoch: u64, seed: u64, posts: &[usize]) -> ScenarioResult {
    let ms = |t: u64| (t - epoch) as f64 / NS_PER_MS;
    let owner = sim.topology().owner;
    let mut blocks = Vec::new();
    let mut delivered_posts = 0usize;
    let mut last_receipt = epoch;
    for (i, (block, at)) in sim.produced().iter().enumerate() {
        let receipts = sim.receipts(&block.hash).map(<[_]>::to_vec).unwrap_or_default();
        let lat: Vec<u64> = receipts.iter().flatten().map(|t| t - at).collect();
        let others: Vec<u64> = receipts
            .iter()
            .enumerate()
            .filter(|(n, _)| *n != owner)
            .filter_map(|(_, t)| t.map(|t| t - at))
            .collect();
        if receipts.iter().all(Option::is_some) {
            delivered_posts += posts.get(i).copied().unwrap_or(0);
        }
        last_receipt = last_receipt.max(receipts.iter().flatten().copied().max().unwrap_or(*at));
        blocks.push(BlockReceipts {
            height: block.height,
            hash: block.hash.to_hex(),
            size_bytes: block.serialized_len(),
            posts: posts.get(i).copied().unwrap_or(0),
            produced_ms: ms(*at),
            receipt_ms: receipts.iter().map(|t| t.map(ms)).collect(),
            max_latency_ms: lat.iter().max().copied().unwrap_or(0) as f64 / NS_PER_MS,
            mean_latency_ms: if others.is_empty() {
                0.0
            } else {
                others.iter().sum::<u64>() as f64 / others.len() as f64 / NS_PER_MS
            },
        });
    }
    let avg = |f: fn(&BlockReceipts) -> f64| {
        if blocks.is_empty() {
            0.0
        } else {
            blocks.iter().map(f).sum::<f64>() / blocks.len() as f64
        }
    };
    let first = sim.produced().first().map_or(epoch, |(_, t)| *t);
    let span_s = (last_receipt - first) as f64 / 1e9;
    let frames: Vec<_> = sim.frames().iter().filter(|f| f.sent_ns >= epoch).collect();
    ScenarioResult {
        seed,
        nodes: sim.topology().len(),
        owner,
        diameter: sim.topology().diameter(),
        mean_max_latency_ms: avg(|b| b.max_latency_ms),
        mean_latency_ms: avg(|b| b.mean_latency_ms),
        posts_per_second: if span_s > 0.0 {
            delivered_posts as f64 / span_s
        } else {
            0.0
        },
        frames_sent: frames.len(),
        bytes_sent: frames.iter().map(|f| f.bytes).sum(),
        blocks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(n: usize) -> Scenario {
        Scenario {
            topology: TopologySpec::Linear { n },
            workload: Workload::default(),
            seed: 3,
            profile: ProfileSpec::default(),
        }
    }

    #[test]
    fn filler_hits_exact_size() {
        for size in [MIB, 200, 153, 10] {
            let p = filler_payload(size);
            assert!(serde_json::from_slice::<serde_json::Value>(&p).is_ok());
            if size >= BLOCK_OVERHEAD + 4 {
                assert_eq!(p.len() + BLOCK_OVERHEAD, size);
            }
        }
    }

    #[test]
    fn scenario_json_roundtrip() {
        let text = r#"{"topology":{"kind":"linear","n":11},"workload":{"block_size_bytes":1048576,"block_count":1},"seed":9,"profile":"wan"}"#;
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(s.topology, TopologySpec::Linear { n: 11 });
        let explicit = r#"{"topology":{"kind":"custom","nodes":[{"node_id":0,"kind":"full"},{"node_id":1,"kind":"light"}],"links":[{"a":0,"b":1}],"owner":0},"profile":{"latency_ms":5,"bandwidth_bytes_per_s":1000}}"#;
        let s = Scenario::from_json(explicit).unwrap();
        assert_eq!(s.profile.params().unwrap().latency_ms, 5.0);
        assert!(Scenario::from_json(r#"{"topology":{"kind":"ring","n":3}}"#).is_err());
        assert!(matches!(
            ProfileSpec::Named("nope".into()).params(),
            Err(SimError::UnknownProfile(_))
        ));
    }

    #[test]
    fn linear_max_latency_is_hop_sum() {
        let r = run_scenario(&linear(11)).unwrap();
        assert_eq!(r.diameter, 10);
        assert_eq!(r.blocks[0].max_latency_ms, 14_600.0);
        assert_eq!(r.blocks[0].size_bytes, MIB);
    }

    #[test]
    fn same_seed_same_bytes() {
        let mut s = linear(5);
        s.workload.block_count = 3;
        s.workload.interval_ms = 500;
        let a = run_scenario(&s).unwrap().to_json();
        let b = run_scenario(&s).unwrap().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_rows() {
        let r = run_scenario(&linear(3)).unwrap();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.contains("2,1,2920"));
    }

    #[test]
    fn post_workload_counts_posts() {
        let mut s = linear(3);
        s.workload.post_size = Some(250);
        s.workload.block_size_bytes = 64 * 1024;
        let r = run_scenario(&s).unwrap();
        assert!(r.blocks[0].posts > 50);
        assert!(r.blocks[0].size_bytes <= 64 * 1024);
        assert!(r.posts_per_second > 0.0);
    }
}
