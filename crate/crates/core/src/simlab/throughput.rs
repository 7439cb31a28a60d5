use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::SimError;
use crate::apps::{make_post, AcceptAll, ForumProjection, RecordVerifier, MAX_CONTENT_BYTES};
use crate::chaincore::{generate_keypair, Block, KeyPair};
use crate::chainstore::{ChainRegistry, ChainStore, Projection};
use crate::nodekit::{assemble_block, create_genesis};
use crate::peernet::RecordPool;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThroughputConfig {
    /// Content bytes per post.
    pub post_size: usize,
    /// Full blocks to push through the pipeline.
    pub blocks: usize,
    pub seed: u64,
}

impl Default for ThroughputConfig {
    fn default() -> Self {
        Self {
            post_size: 250,
            blocks: 32,
            seed: 1,
        }
    }
}

/// One timed pass over the pre-sealed blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelinePass {
    pub elapsed_ms: f64,
    pub posts_per_second: f64,
    pub blocks_per_second: f64,
}

impl PipelinePass {
    fn new(elapsed: Duration, posts: usize, blocks: usize) -> Self {
        let s = elapsed.as_secs_f64().max(f64::EPSILON);
        Self {
            elapsed_ms: s * 1000.0,
            posts_per_second: posts as f64 / s,
            blocks_per_second: blocks as f64 / s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputReport {
    pub post_size: usize,
    pub blocks: usize,
    pub posts: usize,
    pub posts_per_block: f64,
    pub mean_block_bytes: usize,
    /// Record signatures already checked at pool admission, so the
    /// projection hits the verifier cache.
    pub warm: PipelinePass,
    /// Every record signature checked during projection.
    pub cold: PipelinePass,
}

/// Signs and seals `cfg.blocks` full blocks of posts (not timed), then
/// times the receiving side over them: decode with hash recompute, owner
/// signature and link checks, append, and forum projection.
pub fn measure_throughput(cfg: ThroughputConfig) -> Result<ThroughputReport, SimError> {
    if cfg.post_size == 0 || cfg.post_size > MAX_CONTENT_BYTES || cfg.blocks == 0 {
        return Err(SimError::Scenario(format!(
            "post size must be 1..={MAX_CONTENT_BYTES} and blocks at least 1"
        )));
    }
    let chain = |e: crate::chaincore::ChainError| SimError::Chain(e.to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let owner = generate_keypair(Some(rng.gen())).map_err(chain)?;
    let author = generate_keypair(Some(rng.gen())).map_err(chain)?;
    let genesis = create_genesis(&owner, "throughput", 1).map_err(chain)?;
    let (wire, posts) = seal_blocks(&owner, &author, &genesis, cfg)?;

    let verifier = Arc::new(RecordVerifier::new(posts.len().max(1) * 2));
    for r in &posts {
        verifier.verify(r).map_err(|e| SimError::Chain(e.to_string()))?;
    }
    let warm = timed_pass(&owner, &genesis, &wire, verifier, posts.len())?;
    let cold_verifier = Arc::new(RecordVerifier::new(posts.len().max(1) * 2));
    let cold = timed_pass(&owner, &genesis, &wire, cold_verifier, posts.len())?;
    Ok(ThroughputReport {
        post_size: cfg.post_size,
        blocks: wire.len(),
        posts: posts.len(),
        posts_per_block: posts.len() as f64 / wire.len() as f64,
        mean_block_bytes: wire.iter().map(Vec::len).sum::<usize>() / wire.len(),
        warm,
        cold,
    })
}

fn seal_blocks(
    owner: &KeyPair,
    author: &KeyPair,
    genesis: &Block,
    cfg: ThroughputConfig,
) -> Result<(Vec<Vec<u8>>, Vec<crate::apps::ChainRecord>), SimError> {
    let content = "t".repeat(cfg.post_size);
    let probe = make_post(author, &content, None, 0).map_err(|e| SimError::Scenario(e.to_string()))?;
    let per_block = crate::chaincore::MAX_PAYLOAD_BYTES / (probe.to_json().len() + 1) + 1;
    let mut pool = RecordPool::new(usize::MAX);
    let mut all = Vec::new();
    let mut wire = Vec::with_capacity(cfg.blocks);
    let mut head = genesis.clone();
    let mut time = 0u64;
    for _ in 0..cfg.blocks {
        while pool.len() < per_block {
            let r = make_post(author, &content, None, time).map_err(|e| SimError::Scenario(e.to_string()))?;
            time += 1;
            pool.push(owner.chain_id(), r);
        }
        let block = assemble_block(&mut pool, &owner.chain_id(), owner, &head, head.time + 1, &AcceptAll)
            .map_err(|e| SimError::Chain(e.to_string()))?
            .ok_or_else(|| SimError::Scenario("empty block".into()))?;
        all.extend(crate::apps::decode_payload(&block.payload).map_err(|e| SimError::Scenario(e.to_string()))?);
        wire.push(block.to_bytes());
        head = block;
    }
    Ok((wire, all))
}

fn timed_pass(
    owner: &KeyPair,
    genesis: &Block,
    wire: &[Vec<u8>],
    verifier: Arc<RecordVerifier>,
    posts: usize,
) -> Result<PipelinePass, SimError> {
    let mut registry = ChainRegistry::in_memory();
    registry
        .add_default(owner.public_key(), "throughput")
        .map_err(|e| SimError::Chain(e.to_string()))?;
    let store = ChainStore::in_memory(registry);
    let id = owner.chain_id();
    store
        .append_block(&id, genesis.clone())
        .map_err(|e| SimError::Chain(e.to_string()))?;
    let projection = ForumProjection::new(owner.public_key()).with_verifier(verifier);
    let mut state = projection.initial();
    let start = Instant::now();
    for bytes in wire {
        let block = Block::from_bytes(bytes).map_err(|e| SimError::Chain(e.to_string()))?;
        store
            .append_block(&id, block.clone())
            .map_err(|e| SimError::Chain(e.to_string()))?;
        projection.apply(&mut state, &block);
    }
    let elapsed = start.elapsed();
    if state.posts.len() != posts {
        return Err(SimError::Scenario(format!(
            "projection saw {} of {posts} posts",
            state.posts.len()
        )));
    }
    Ok(PipelinePass::new(elapsed, posts, wire.len()))
}
