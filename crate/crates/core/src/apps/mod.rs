//! Application records carried in block payloads and their projections:
//! a forum (posts, replies, soft deletes) and an identity directory
//! (unique names per chain).
//!
//! Payloads are canonical JSON arrays of author-signed records. Every
//! record is verified independently of the block that carries it, so a
//! chain owner can bundle user speech but cannot fabricate it.

mod forum;
mod identity;
mod payload;
mod record;
mod verifier;

pub use forum::{project_forum, ForumProjection, ForumState, PostEntry};
pub use identity::{project_identity, IdentityProjection, IdentityState, NameEntry};
pub use payload::{decode_payload, decode_payload_lenient, encode_payload, encoded_payload_len};
pub use record::{
    compute_post_id, is_valid_name, make_delete, make_identity, make_post, verify_record, AuthorKey, ChainRecord,
    RecordBody, RecordKind, MAX_CONTENT_BYTES, MAX_NAME_CHARS, MAX_PROFILE_BYTES,
};
pub use verifier::RecordVerifier;

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AppError {
    #[error("payload-too-large: {len} bytes")]
    PayloadTooLarge { len: usize },
    #[error("decode-error: {0}")]
    Decode(String),
    #[error("oversize-content: {len} bytes")]
    OversizeContent { len: usize },
    #[error("bad-schema: {0}")]
    BadSchema(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordRejection {
    BadSchema(String),
    BadSignature,
}

impl RecordRejection {
    pub fn code(&self) -> &'static str {
        match self {
            RecordRejection::BadSchema(_) => "bad-schema",
            RecordRejection::BadSignature => "bad-signature",
        }
    }
}

impl fmt::Display for RecordRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordRejection::BadSchema(m) => write!(f, "bad-schema: {m}"),
            RecordRejection::BadSignature => f.write_str("bad-signature"),
        }
    }
}

impl std::error::Error for RecordRejection {}

/// Pre-insertion policy applied by a chain owner when assembling blocks
/// (rate limits, CAPTCHA proofs, account binding and so on).
pub trait RecordFilter: Send + Sync {
    fn admit(&self, record: &ChainRecord) -> bool;
}

/// Admits everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct AcceptAll;

impl RecordFilter for AcceptAll {
    fn admit(&self, _record: &ChainRecord) -> bool {
        true
    }
}

impl<F> RecordFilter for F
where
    F: Fn(&ChainRecord) -> bool + Send + Sync,
{
    fn admit(&self, record: &ChainRecord) -> bool {
        self(record)
    }
}
