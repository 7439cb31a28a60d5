use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use infnote_core::apps::{
    verify_record, ChainRecord, ForumProjection, IdentityProjection, PostEntry, RecordRejection, RecordVerifier,
};
use infnote_core::chaincore::{Block, ChainId, PublicKey};
use infnote_core::chainstore::{ChainStatus, ChainStore};
use infnote_core::wire::NodeKind;
use serde::{Deserialize, Serialize};
use serde_json::json;
use serde_json::value::RawValue;
use tokio::sync::{mpsc, oneshot};
use tower_http::cors::CorsLayer;

use crate::runtime::{Command, NodeHandle};

/// Block as served over HTTP. `hex` is the full serialized block; the
/// other fields repeat its parts for convenience.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockView {
    pub chain_id: String,
    pub height: u64,
    pub time: u64,
    pub prev_hash: String,
    pub hash: String,
    pub signature: String,
    pub payload: String,
    pub hex: String,
}

impl From<&Block> for BlockView {
    fn from(b: &Block) -> Self {
        Self {
            chain_id: b.chain_id.to_hex(),
            height: b.height,
            time: b.time,
            prev_hash: b.prev_hash.to_hex(),
            hash: b.hash.to_hex(),
            signature: b.signature.to_hex(),
            payload: hex::encode(&b.payload),
            hex: b.to_hex(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain_id: String,
    pub owner: String,
    pub label: String,
    pub status: String,
    pub height: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeStatus {
    pub kind: NodeKind,
    pub peers: usize,
    pub chains: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub accepted: usize,
    pub duplicates: usize,
    pub rejected: Vec<RejectedRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRecord {
    pub index: usize,
    pub code: String,
}

#[derive(Clone)]
struct ApiState {
    store: Arc<ChainStore>,
    cmd: mpsc::Sender<Command>,
    verifier: Arc<RecordVerifier>,
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    code: &'static str,
    detail: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, detail: impl Into<String>) -> Self {
        Self {
            status,
            code,
            detail: detail.into(),
        }
    }

    fn unavailable() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "node-stopped", "node is shutting down")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "detail": self.detail}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Direct-connect HTTP API of a full node; `None` for light nodes.
pub fn api_router(handle: &NodeHandle) -> Option<Router> {
    let store = handle.store()?.clone();
    let state = ApiState {
        store,
        cmd: handle.commands(),
        verifier: Arc::new(RecordVerifier::default()),
    };
    Some(
        Router::new()
            .route("/status", get(status))
            .route("/chains", get(chains))
            .route("/chains/{id}/head", get(head))
            .route("/chains/{id}/blocks/{height}", get(block))
            .route("/chains/{id}/posts", get(posts))
            .route("/chains/{id}/names/{name}", get(name))
            .route("/chains/{id}/records", axum::routing::post(submit))
            .layer(CorsLayer::permissive())
            .with_state(state),
    )
}

fn known_chain(state: &ApiState, id: &str) -> ApiResult<(ChainId, PublicKey)> {
    let chain_id =
        ChainId::from_hex(id).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad-chain-id", e.to_string()))?;
    let owner = state
        .store
        .registry()
        .owner_of(&chain_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown-chain", id.to_string()))?;
    Ok((chain_id, owner))
}

async fn status(State(state): State<ApiState>) -> ApiResult<Json<NodeStatus>> {
    let (reply, rx) = oneshot::channel();
    state
        .cmd
        .send(Command::Status { reply })
        .await
        .map_err(|_| ApiError::unavailable())?;
    Ok(Json(rx.await.map_err(|_| ApiError::unavailable())?))
}

async fn chains(State(state): State<ApiState>) -> Json<Vec<ChainSummary>> {
    let list = state
        .store
        .list_chains(None)
        .into_iter()
        .map(|e| ChainSummary {
            chain_id: e.chain_id.to_hex(),
            owner: e.owner.to_hex(),
            label: e.label,
            status: match e.status {
                ChainStatus::Followed => "followed",
                ChainStatus::Dropped => "dropped",
                ChainStatus::Banned => "banned",
            }
            .to_string(),
            height: state.store.head_height(&e.chain_id),
        })
        .collect();
    Json(list)
}

async fn head(State(state): State<ApiState>, Path(id): Path<String>) -> ApiResult<Json<BlockView>> {
    let (chain_id, _) = known_chain(&state, &id)?;
    let b = state
        .store
        .get_head(&chain_id)
        .ok()
        .flatten()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not-found", "chain has no blocks"))?;
    Ok(Json(BlockView::from(&b)))
}

async fn block(State(state): State<ApiState>, Path((id, height)): Path<(String, u64)>) -> ApiResult<Json<BlockView>> {
    let (chain_id, _) = known_chain(&state, &id)?;
    let b = state.store.get_block(&chain_id, height).ok().flatten().ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not-found",
            format!("no block at height {height}"),
        )
    })?;
    Ok(Json(BlockView::from(&b)))
}

#[derive(Debug, Deserialize)]
struct PostsQuery {
    after: Option<u64>,
}

async fn posts(
    State(state): State<ApiState>,
    Path(id): Path<String>,
    Query(q): Query<PostsQuery>,
) -> ApiResult<Json<Vec<PostEntry>>> {
    let (chain_id, owner) = known_chain(&state, &id)?;
    let projection = ForumProjection::new(&owner).with_verifier(state.verifier.clone());
    let forum = state.store.replay(&chain_id, &projection);
    Ok(Json(forum.posts_after(q.after).cloned().collect()))
}

async fn name(
    State(state): State<ApiState>,
    Path((id, name)): Path<(String, String)>,
) -> ApiResult<Json<serde_json::Value>> {
    let (chain_id, _) = known_chain(&state, &id)?;
    let projection = IdentityProjection::new().with_verifier(state.verifier.clone());
    let names = state.store.replay(&chain_id, &projection);
    let entry = names.resolve(&name).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not-found",
            format!("name {name:?} is not registered"),
        )
    })?;
    Ok(Json(json!({
        "name": name,
        "pub_key": entry.pub_key,
        "block_height": entry.block_height,
        "profile": entry.profile,
    })))
}

fn parse_records(body: &[u8]) -> ApiResult<Vec<ChainRecord>> {
    let bad = |e: String| ApiError::new(StatusCode::BAD_REQUEST, "decode-error", e);
    let text = std::str::from_utf8(body).map_err(|e| bad(e.to_string()))?;
    let items: Vec<&RawValue> = if text.trim_start().starts_with('[') {
        serde_json::from_str(text).map_err(|e| bad(e.to_string()))?
    } else {
        vec![serde_json::from_str(text).map_err(|e| bad(e.to_string()))?]
    };
    items
        .into_iter()
        .map(|raw| ChainRecord::from_json(raw.get()).map_err(|e| bad(e.to_string())))
        .collect()
}

async fn submit(
    State(state): State<ApiState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<SubmitResponse>)> {
    let (chain_id, _) = known_chain(&state, &id)?;
    let records = parse_records(&body)?;
    for r in &records {
        match verify_record(r) {
            Ok(()) => {}
            Err(RecordRejection::BadSchema(m)) => return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad-schema", m)),
            Err(RecordRejection::BadSignature) => {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "bad-signature",
                    "author signature does not verify",
                ))
            }
        }
    }
    let (reply, rx) = oneshot::channel();
    state
        .cmd
        .send(Command::Submit {
            chain_id,
            records,
            reply,
        })
        .await
        .map_err(|_| ApiError::unavailable())?;
    let report = rx.await.map_err(|_| ApiError::unavailable())?;
    Ok((
        StatusCode::ACCEPTED,
        Json(SubmitResponse {
            accepted: report.accepted,
            duplicates: report.duplicates,
            rejected: report
                .rejected
                .into_iter()
                .map(|(index, code)| RejectedRecord { index, code })
                .collect(),
        }),
    ))
}
