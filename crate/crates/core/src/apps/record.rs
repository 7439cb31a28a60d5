use std::borrow::Cow;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{AppError, RecordRejection};
use crate::chaincore::{sha256, Hash256, KeyPair, PublicKey, Signature, PUBLIC_KEY_LEN};

/// 64 KiB.
pub const MAX_CONTENT_BYTES: usize = 64 * 1024;
/// 4 KiB.
pub const MAX_PROFILE_BYTES: usize = 4 * 1024;
pub const MAX_NAME_CHARS: usize = 32;

/// Raw compressed author key as carried in a record. It is only parsed as a
/// curve point when a signature has to be checked.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AuthorKey(pub [u8; PUBLIC_KEY_LEN]);

impl AuthorKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl From<&PublicKey> for AuthorKey {
    fn from(k: &PublicKey) -> Self {
        AuthorKey(*k.as_bytes())
    }
}

impl fmt::Debug for AuthorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AuthorKey({})", self.to_hex())
    }
}

impl Serialize for AuthorKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordKind {
    Post,
    DeleteMarker,
    Identity,
}

impl RecordKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecordKind::Post => "post",
            RecordKind::DeleteMarker => "delete_marker",
            RecordKind::Identity => "identity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordBody {
    Post {
        post_id: Hash256,
        content: String,
        reply_to: Option<Hash256>,
        client_time: u64,
    },
    DeleteMarker {
        target: Hash256,
    },
    Identity {
        name: String,
        profile: Option<String>,
    },
}

impl RecordBody {
    pub fn kind(&self) -> RecordKind {
        match self {
            RecordBody::Post { .. } => RecordKind::Post,
            RecordBody::DeleteMarker { .. } => RecordKind::DeleteMarker,
            RecordBody::Identity { .. } => RecordKind::Identity,
        }
    }

    /// Canonical JSON of the body: sorted keys, no whitespace, lowercase hex.
    fn write_json(&self, out: &mut String) {
        match self {
            RecordBody::Post {
                post_id,
                content,
                reply_to,
                client_time,
            } => {
                out.push_str("{\"client_time\":");
                out.push_str(&client_time.to_string());
                out.push_str(",\"content\":");
                push_json_str(out, content);
                out.push_str(",\"post_id\":\"");
                out.push_str(&post_id.to_hex());
                out.push_str("\",\"reply_to\":");
                match reply_to {
                    Some(r) => {
                        out.push('"');
                        out.push_str(&r.to_hex());
                        out.push('"');
                    }
                    None => out.push_str("null"),
                }
                out.push('}');
            }
            RecordBody::DeleteMarker { target } => {
                out.push_str("{\"target\":\"");
                out.push_str(&target.to_hex());
                out.push_str("\"}");
            }
            RecordBody::Identity { name, profile } => {
                out.push_str("{\"name\":");
                push_json_str(out, name);
                out.push_str(",\"profile\":");
                match profile {
                    Some(p) => push_json_str(out, p),
                    None => out.push_str("null"),
                }
                out.push('}');
            }
        }
    }
}

fn push_json_str(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("string serialization is infallible"));
}

/// One author-signed application record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainRecord {
    pub author_pub: AuthorKey,
    pub body: RecordBody,
    pub author_sig: Signature,
}

impl ChainRecord {
    pub fn kind(&self) -> RecordKind {
        self.body.kind()
    }

    /// The bytes an author signs: `{"body":<body>,"kind":"<kind>"}`.
    pub fn signing_bytes(&self) -> String {
        signing_bytes(&self.body)
    }

    pub fn signing_digest(&self) -> Hash256 {
        sha256(self.signing_bytes().as_bytes())
    }

    /// Canonical record JSON as stored in payloads and sent on the wire.
    pub fn to_json(&self) -> String {
        let mut out = String::with_capacity(400);
        out.push_str("{\"author_pub\":\"");
        out.push_str(&self.author_pub.to_hex());
        out.push_str("\",\"author_sig\":\"");
        out.push_str(&self.author_sig.to_hex());
        out.push_str("\",\"body\":");
        self.body.write_json(&mut out);
        out.push_str(",\"kind\":\"");
        out.push_str(self.kind().as_str());
        out.push_str("\"}");
        out
    }

    pub fn from_json(text: &str) -> Result<Self, AppError> {
        let raw: RawRecord<'_> = serde_json::from_str(text).map_err(|e| AppError::Decode(e.to_string()))?;
        raw.into_record()
    }

    /// Identity used for gossip dedup: the post id for posts, otherwise
    /// the hash of the canonical record.
    pub fn dedup_key(&self) -> Hash256 {
        match &self.body {
            RecordBody::Post { post_id, .. } => *post_id,
            _ => sha256(self.to_json().as_bytes()),
        }
    }

    pub fn post_id(&self) -> Option<Hash256> {
        match &self.body {
            RecordBody::Post { post_id, .. } => Some(*post_id),
            _ => None,
        }
    }

    /// Structural rules that do not need the signature.
    pub fn check_schema(&self) -> Result<(), RecordRejection> {
        match &self.body {
            RecordBody::Post {
                post_id,
                content,
                client_time,
                ..
            } => {
                if content.len() > MAX_CONTENT_BYTES {
                    return Err(RecordRejection::BadSchema("content too large".into()));
                }
                if compute_post_id(&self.author_pub, content, *client_time) != *post_id {
                    return Err(RecordRejection::BadSchema("post_id mismatch".into()));
                }
            }
            RecordBody::DeleteMarker { .. } => {}
            RecordBody::Identity { name, profile } => {
                if !is_valid_name(name) {
                    return Err(RecordRejection::BadSchema(format!(
                        "name must be 1-{MAX_NAME_CHARS} chars of [a-z0-9_]"
                    )));
                }
                if profile.as_ref().is_some_and(|p| p.len() > MAX_PROFILE_BYTES) {
                    return Err(RecordRejection::BadSchema("profile too large".into()));
                }
            }
        }
        Ok(())
    }
}

impl Serialize for ChainRecord {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let raw = serde_json::value::RawValue::from_string(self.to_json()).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ChainRecord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawRecord::deserialize(d)?;
        raw.into_record().map_err(serde::de::Error::custom)
    }
}

pub(crate) fn signing_bytes(body: &RecordBody) -> String {
    let mut out = String::with_capacity(256);
    out.push_str("{\"body\":");
    body.write_json(&mut out);
    out.push_str(",\"kind\":\"");
    out.push_str(body.kind().as_str());
    out.push_str("\"}");
    out
}

/// `SHA-256(author_pub ‖ content ‖ client_time as 8-byte big-endian)`.
pub fn compute_post_id(author: &AuthorKey, content: &str, client_time: u64) -> Hash256 {
    let mut buf = Vec::with_capacity(PUBLIC_KEY_LEN + content.len() + 8);
    buf.extend_from_slice(&author.0);
    buf.extend_from_slice(content.as_bytes());
    buf.extend_from_slice(&client_time.to_be_bytes());
    sha256(&buf)
}

pub fn is_valid_name(name: &str) -> bool {
    (1..=MAX_NAME_CHARS).contains(&name.len())
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

fn sign(author: &KeyPair, body: RecordBody) -> ChainRecord {
    let digest = sha256(signing_bytes(&body).as_bytes());
    ChainRecord {
        author_pub: author.public_key().into(),
        author_sig: author.sign_digest(&digest),
        body,
    }
}

pub fn make_post(
    author: &KeyPair,
    content: &str,
    reply_to: Option<Hash256>,
    client_time: u64,
) -> Result<ChainRecord, AppError> {
    if content.len() > MAX_CONTENT_BYTES {
        return Err(AppError::OversizeContent { len: content.len() });
    }
    let post_id = compute_post_id(&author.public_key().into(), content, client_time);
    Ok(sign(
        author,
        RecordBody::Post {
            post_id,
            content: content.to_string(),
            reply_to,
            client_time,
        },
    ))
}

pub fn make_delete(author: &KeyPair, target: Hash256) -> ChainRecord {
    sign(author, RecordBody::DeleteMarker { target })
}

pub fn make_identity(author: &KeyPair, name: &str, profile: Option<&str>) -> Result<ChainRecord, AppError> {
    if !is_valid_name(name) {
        return Err(AppError::BadSchema(format!("invalid name {name:?}")));
    }
    if profile.is_some_and(|p| p.len() > MAX_PROFILE_BYTES) {
        return Err(AppError::BadSchema("profile too large".into()));
    }
    Ok(sign(
        author,
        RecordBody::Identity {
            name: name.to_string(),
            profile: profile.map(str::to_string),
        },
    ))
}

/// Schema check, then signature check.
pub fn verify_record(record: &ChainRecord) -> Result<(), RecordRejection> {
    record.check_schema()?;
    verify_signature(record, &record.signing_digest())
}

pub(crate) fn verify_signature(record: &ChainRecord, digest: &Hash256) -> Result<(), RecordRejection> {
    let key = PublicKey::from_bytes(&record.author_pub.0).map_err(|_| RecordRejection::BadSignature)?;
    if key.verify_digest(digest, &record.author_sig) {
        Ok(())
    } else {
        Err(RecordRejection::BadSignature)
    }
}

#[derive(Deserialize)]
struct RawRecord<'a> {
    #[serde(borrow)]
    kind: Cow<'a, str>,
    #[serde(borrow)]
    author_pub: Cow<'a, str>,
    #[serde(borrow)]
    author_sig: Cow<'a, str>,
    body: RawBody<'a>,
}

#[derive(Deserialize)]
struct RawBody<'a> {
    #[serde(default, borrow)]
    post_id: Option<Cow<'a, str>>,
    #[serde(default)]
    content: Option<String>,
    #[serde(default, borrow)]
    reply_to: Option<Cow<'a, str>>,
    #[serde(default)]
    client_time: Option<u64>,
    #[serde(default, borrow)]
    target: Option<Cow<'a, str>>,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    profile: Option<String>,
}

fn hash_field(v: Option<Cow<'_, str>>, field: &str) -> Result<Hash256, AppError> {
    let v = v.ok_or_else(|| AppError::Decode(format!("missing {field}")))?;
    Hash256::from_hex(&v).map_err(|e| AppError::Decode(format!("{field}: {e}")))
}

impl RawRecord<'_> {
    fn into_record(self) -> Result<ChainRecord, AppError> {
        let mut author_pub = [0u8; PUBLIC_KEY_LEN];
        hex::decode_to_slice(self.author_pub.as_ref(), &mut author_pub)
            .map_err(|e| AppError::Decode(format!("author_pub: {e}")))?;
        let author_sig =
            Signature::from_hex(&self.author_sig).map_err(|e| AppError::Decode(format!("author_sig: {e}")))?;
        let b = self.body;
        let body = match self.kind.as_ref() {
            "post" => RecordBody::Post {
                post_id: hash_field(b.post_id, "post_id")?,
                content: b.content.ok_or_else(|| AppError::Decode("missing content".into()))?,
                reply_to: match b.reply_to {
                    Some(r) => Some(hash_field(Some(r), "reply_to")?),
                    None => None,
                },
                client_time: b
                    .client_time
                    .ok_or_else(|| AppError::Decode("missing client_time".into()))?,
            },
            "delete_marker" => RecordBody::DeleteMarker {
                target: hash_field(b.target, "target")?,
            },
            "identity" => RecordBody::Identity {
                name: b.name.ok_or_else(|| AppError::Decode("missing name".into()))?,
                profile: b.profile,
            },
            other => return Err(AppError::Decode(format!("unknown kind {other:?}"))),
        };
        Ok(ChainRecord {
            author_pub: AuthorKey(author_pub),
            body,
            author_sig,
        })
    }
}
