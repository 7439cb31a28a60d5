use std::borrow::Cow;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::{Hello, WireError, ENVELOPE_VERSION, MAX_BLOCKS_PER_MESSAGE, MAX_FRAME_BYTES};
use crate::apps::ChainRecord;
use crate::chaincore::{Block, ChainId};

/// Dialable endpoint as exchanged in `peers` messages.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NetAddress {
    pub host: String,
    pub port: u16,
}

impl NetAddress {
    pub fn new(host: impl Into<String>, port: u16) -> Result<Self, WireError> {
        if port == 0 {
            return Err(WireError::BadJson("port must be nonzero".into()));
        }
        Ok(Self {
            host: host.into(),
            port,
        })
    }
}

impl fmt::Display for NetAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.host.contains(':') {
            write!(f, "[{}]:{}", self.host, self.port)
        } else {
            write!(f, "{}:{}", self.host, self.port)
        }
    }
}

/// An address-book entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerAddress {
    pub host: String,
    pub port: u16,
    pub last_seen: u64,
    pub failures: u32,
}

impl PeerAddress {
    pub fn new(addr: NetAddress, last_seen: u64) -> Self {
        Self {
            host: addr.host,
            port: addr.port,
            last_seen,
            failures: 0,
        }
    }

    pub fn net(&self) -> NetAddress {
        NetAddress {
            host: self.host.clone(),
            port: self.port,
        }
    }

    pub fn record_failure(&mut self) {
        self.failures = self.failures.saturating_add(1);
    }

    /// A completed handshake is the only thing that clears failures.
    pub fn record_handshake(&mut self, now: u64) {
        self.failures = 0;
        self.last_seen = self.last_seen.max(now);
    }
}

/// One entry of a `submit_records` batch. Entries that do not decode are
/// kept verbatim so the rest of the batch is still usable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordSlot {
    Parsed(ChainRecord),
    Malformed { raw: String, error: String },
}

impl From<ChainRecord> for RecordSlot {
    fn from(r: ChainRecord) -> Self {
        RecordSlot::Parsed(r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    Hello(Hello),
    HelloAck(Hello),
    GetPeers,
    Peers {
        addresses: Vec<NetAddress>,
    },
    /// Inclusive height range.
    GetBlocks {
        chain_id: ChainId,
        from: u64,
        to: u64,
    },
    Blocks {
        chain_id: ChainId,
        blocks: Vec<Block>,
    },
    NewBlock {
        chain_id: ChainId,
        block: Block,
    },
    SubmitRecords {
        chain_id: ChainId,
        records: Vec<RecordSlot>,
    },
    Error {
        code: String,
        detail: String,
    },
}

impl WireMessage {
    pub fn type_name(&self) -> &'static str {
        match self {
            WireMessage::Hello(_) => "hello",
            WireMessage::HelloAck(_) => "hello_ack",
            WireMessage::GetPeers => "get_peers",
            WireMessage::Peers { .. } => "peers",
            WireMessage::GetBlocks { .. } => "get_blocks",
            WireMessage::Blocks { .. } => "blocks",
            WireMessage::NewBlock { .. } => "new_block",
            WireMessage::SubmitRecords { .. } => "submit_records",
            WireMessage::Error { .. } => "error",
        }
    }

    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        WireMessage::Error {
            code: code.to_string(),
            detail: detail.into(),
        }
    }
}

#[derive(Serialize)]
struct GetBlocksBody {
    chain_id: ChainId,
    from: u64,
    to: u64,
}

#[derive(Serialize)]
struct ErrorBodyOut<'a> {
    code: &'a str,
    detail: &'a str,
}

#[derive(Serialize)]
struct PeersBodyOut<'a> {
    addresses: &'a [NetAddress],
}

fn body_json(msg: &WireMessage) -> String {
    match msg {
        WireMessage::Hello(h) | WireMessage::HelloAck(h) => to_json(h),
        WireMessage::GetPeers => "{}".to_string(),
        WireMessage::Peers { addresses } => to_json(&PeersBodyOut { addresses }),
        WireMessage::GetBlocks { chain_id, from, to } => to_json(&GetBlocksBody {
            chain_id: *chain_id,
            from: *from,
            to: *to,
        }),
        WireMessage::Blocks { chain_id, blocks } => {
            let mut out = String::with_capacity(80 + blocks.iter().map(|b| b.serialized_len() * 2 + 3).sum::<usize>());
            out.push_str("{\"blocks\":[");
            for (i, b) in blocks.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('"');
                out.push_str(&b.to_hex());
                out.push('"');
            }
            out.push_str("],\"chain_id\":\"");
            out.push_str(&chain_id.to_hex());
            out.push_str("\"}");
            out
        }
        WireMessage::NewBlock { chain_id, block } => format!(
            "{{\"block\":\"{}\",\"chain_id\":\"{}\"}}",
            block.to_hex(),
            chain_id.to_hex()
        ),
        WireMessage::SubmitRecords { chain_id, records } => {
            let mut out = String::from("{\"chain_id\":\"");
            out.push_str(&chain_id.to_hex());
            out.push_str("\",\"records\":[");
            for (i, r) in records.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match r {
                    RecordSlot::Parsed(rec) => out.push_str(&rec.to_json()),
                    RecordSlot::Malformed { raw, .. } => out.push_str(raw),
                }
            }
            out.push_str("]}");
            out
        }
        WireMessage::Error { code, detail } => to_json(&ErrorBodyOut { code, detail }),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("wire bodies always serialize")
}

/// Encodes a message as a JSON text frame.
pub fn encode_message(msg: &WireMessage) -> String {
    let body = body_json(msg);
    let mut out = String::with_capacity(body.len() + 40);
    out.push_str("{\"v\":");
    out.push_str(&ENVELOPE_VERSION.to_string());
    out.push_str(",\"type\":\"");
    out.push_str(msg.type_name());
    out.push_str("\",\"body\":");
    out.push_str(&body);
    out.push('}');
    out
}

#[derive(Deserialize)]
struct RawEnvelope<'a> {
    #[serde(default)]
    v: Option<serde_json::Value>,
    #[serde(rename = "type", borrow)]
    kind: Cow<'a, str>,
    #[serde(default, borrow)]
    body: Option<&'a RawValue>,
}

#[derive(Deserialize)]
struct GetBlocksIn {
    chain_id: ChainId,
    from: u64,
    to: u64,
}

#[derive(Deserialize)]
struct BlocksIn<'a> {
    chain_id: ChainId,
    #[serde(borrow)]
    blocks: Vec<Cow<'a, str>>,
}

#[derive(Deserialize)]
struct NewBlockIn<'a> {
    chain_id: ChainId,
    #[serde(borrow)]
    block: Cow<'a, str>,
}

#[derive(Deserialize)]
struct SubmitIn<'a> {
    chain_id: ChainId,
    #[serde(borrow)]
    records: Vec<&'a RawValue>,
}

#[derive(Deserialize)]
struct PeersIn {
    addresses: Vec<NetAddress>,
}

#[derive(Deserialize)]
struct ErrorIn {
    code: String,
    #[serde(default)]
    detail: String,
}

#[derive(Deserialize)]
struct Empty {}

fn body<'a, T: Deserialize<'a>>(raw: &'a str) -> Result<T, WireError> {
    serde_json::from_str(raw).map_err(|e| WireError::BadJson(e.to_string()))
}

fn decode_block(hex_text: &str) -> Result<Block, WireError> {
    Block::from_hex(hex_text).map_err(|e| WireError::BadJson(format!("block: {e}")))
}

/// Decodes one frame. Unknown body fields are ignored.
pub fn decode_message(bytes: &[u8]) -> Result<WireMessage, WireError> {
    let text = std::str::from_utf8(bytes).map_err(|e| WireError::BadJson(e.to_string()))?;
    let env: RawEnvelope<'_> = serde_json::from_str(text).map_err(|e| WireError::BadJson(e.to_string()))?;
    match &env.v {
        Some(v) if v.as_u64() == Some(ENVELOPE_VERSION as u64) => {}
        Some(v) => return Err(WireError::BadVersion(v.to_string())),
        None => return Err(WireError::BadVersion("missing".into())),
    }
    let raw = env.body.map_or("{}", RawValue::get);
    let msg = match env.kind.as_ref() {
        "hello" => WireMessage::Hello(body(raw)?),
        "hello_ack" => WireMessage::HelloAck(body(raw)?),
        "get_peers" => {
            body::<Empty>(raw)?;
            WireMessage::GetPeers
        }
        "peers" => {
            let p: PeersIn = body(raw)?;
            if p.addresses.iter().any(|a| a.port == 0) {
                return Err(WireError::BadJson("port must be nonzero".into()));
            }
            WireMessage::Peers { addresses: p.addresses }
        }
        "get_blocks" => {
            let g: GetBlocksIn = body(raw)?;
            if g.to < g.from {
                return Err(WireError::BadJson("get_blocks range is empty".into()));
            }
            WireMessage::GetBlocks {
                chain_id: g.chain_id,
                from: g.from,
                to: g.to,
            }
        }
        "blocks" => {
            let b: BlocksIn<'_> = body(raw)?;
            if b.blocks.len() > MAX_BLOCKS_PER_MESSAGE {
                return Err(WireError::BadJson(format!(
                    "{} blocks exceeds {MAX_BLOCKS_PER_MESSAGE}",
                    b.blocks.len()
                )));
            }
            let blocks = b
                .blocks
                .iter()
                .map(|h| decode_block(h))
                .collect::<Result<Vec<_>, _>>()?;
            if blocks.windows(2).any(|w| w[1].height <= w[0].height) {
                return Err(WireError::BadJson("blocks are not height-ordered".into()));
            }
            WireMessage::Blocks {
                chain_id: b.chain_id,
                blocks,
            }
        }
        "new_block" => {
            let n: NewBlockIn<'_> = body(raw)?;
            WireMessage::NewBlock {
                chain_id: n.chain_id,
                block: decode_block(&n.block)?,
            }
        }
        "submit_records" => {
            let s: SubmitIn<'_> = body(raw)?;
            let records = s
                .records
                .into_iter()
                .map(|r| match ChainRecord::from_json(r.get()) {
                    Ok(rec) => RecordSlot::Parsed(rec),
                    Err(e) => RecordSlot::Malformed {
                        raw: r.get().to_string(),
                        error: e.to_string(),
                    },
                })
                .collect();
            WireMessage::SubmitRecords {
                chain_id: s.chain_id,
                records,
            }
        }
        "error" => {
            let e: ErrorIn = body(raw)?;
            WireMessage::Error {
                code: e.code,
                detail: e.detail,
            }
        }
        other => return Err(WireError::UnknownType(other.to_string())),
    };
    Ok(msg)
}

/// Splits blocks into `blocks` messages that respect both the per-message
/// count cap and the frame size bound.
pub fn chunk_blocks(chain_id: ChainId, blocks: Vec<Block>) -> Vec<WireMessage> {
    const ENVELOPE_OVERHEAD: usize = 160;
    let mut out = Vec::new();
    let mut current = Vec::new();
    let mut size = ENVELOPE_OVERHEAD;
    for b in blocks {
        let encoded = b.serialized_len() * 2 + 3;
        if !current.is_empty() && (current.len() == MAX_BLOCKS_PER_MESSAGE || size + encoded > MAX_FRAME_BYTES) {
            out.push(WireMessage::Blocks {
                chain_id,
                blocks: std::mem::take(&mut current),
            });
            size = ENVELOPE_OVERHEAD;
        }
        size += encoded;
        current.push(b);
    }
    if !current.is_empty() {
        out.push(WireMessage::Blocks {
            chain_id,
            blocks: current,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::make_post;
    use crate::chaincore::{generate_keypair, seal_block, BlockDraft, Hash256, MAX_PAYLOAD_BYTES};
    use crate::wire::{ChainHead, NodeKind, PROTOCOL_VERSION};

    fn block(height: u64, payload_len: usize) -> Block {
        let k = generate_keypair(Some([0x51; 32])).unwrap();
        seal_block(
            BlockDraft {
                chain_id: k.chain_id(),
                height,
                time: height + 1,
                prev_hash: Hash256::ZERO,
                payload: vec![b'x'; payload_len],
            },
            &k,
        )
        .unwrap()
    }

    #[test]
    fn get_peers_literal() {
        assert_eq!(
            encode_message(&WireMessage::GetPeers),
            r#"{"v":1,"type":"get_peers","body":{}}"#
        );
        assert_eq!(
            decode_message(br#"{"v":1,"type":"get_peers","body":{}}"#).unwrap(),
            WireMessage::GetPeers
        );
    }

    #[test]
    fn version_two_rejected() {
        assert!(matches!(
            decode_message(br#"{"v":2,"type":"get_peers","body":{}}"#),
            Err(WireError::BadVersion(_))
        ));
        assert!(matches!(
            decode_message(br#"{"type":"get_peers","body":{}}"#),
            Err(WireError::BadVersion(_))
        ));
    }

    #[test]
    fn unknown_type_and_extra_fields() {
        assert!(matches!(
            decode_message(br#"{"v":1,"type":"gossip","body":{}}"#),
            Err(WireError::UnknownType(t)) if t == "gossip"
        ));
        let m = decode_message(br#"{"v":1,"extra":true,"type":"error","body":{"code":"x","detail":"y","more":[1]}}"#)
            .unwrap();
        assert_eq!(m, WireMessage::error("x", "y"));
    }

    #[test]
    fn bad_json_variants() {
        for input in [
            &b"not json"[..],
            b"{}",
            b"\xff\xfe",
            br#"{"v":1,"type":"get_blocks","body":{"from":1}}"#,
        ] {
            assert!(decode_message(input).is_err());
        }
        assert!(matches!(
            decode_message(br#"{"v":1,"type":"peers","body":{"addresses":[{"host":"a","port":0}]}}"#),
            Err(WireError::BadJson(_))
        ));
    }

    #[test]
    fn roundtrip_all_kinds() {
        let k = generate_keypair(Some([0x52; 32])).unwrap();
        let b0 = block(0, 3);
        let b1 = block(1, 0);
        let rec = make_post(&k, "hi", None, 4).unwrap();
        let hello = Hello {
            protocol_version: PROTOCOL_VERSION,
            node_kind: NodeKind::Light,
            chain_heads: vec![ChainHead {
                chain_id: b0.chain_id,
                height: 9,
            }],
        };
        let msgs = vec![
            WireMessage::Hello(hello.clone()),
            WireMessage::HelloAck(hello),
            WireMessage::GetPeers,
            WireMessage::Peers {
                addresses: vec![NetAddress::new("::1", 7).unwrap()],
            },
            WireMessage::GetBlocks {
                chain_id: b0.chain_id,
                from: 0,
                to: 63,
            },
            WireMessage::Blocks {
                chain_id: b0.chain_id,
                blocks: vec![b0.clone(), b1],
            },
            WireMessage::NewBlock {
                chain_id: b0.chain_id,
                block: b0.clone(),
            },
            WireMessage::SubmitRecords {
                chain_id: b0.chain_id,
                records: vec![rec.into()],
            },
            WireMessage::error("not-served", "light node"),
        ];
        for m in msgs {
            assert_eq!(decode_message(encode_message(&m).as_bytes()).unwrap(), m);
        }
    }

    #[test]
    fn malformed_record_does_not_sink_batch() {
        let k = generate_keypair(Some([0x52; 32])).unwrap();
        let rec = make_post(&k, "hi", None, 4).unwrap();
        let frame = format!(
            r#"{{"v":1,"type":"submit_records","body":{{"chain_id":"{}","records":[{{"kind":"vote"}},{}]}}}}"#,
            "00".repeat(32),
            rec.to_json()
        );
        let WireMessage::SubmitRecords { records, .. } = decode_message(frame.as_bytes()).unwrap() else {
            panic!("wrong type");
        };
        assert!(matches!(records[0], RecordSlot::Malformed { .. }));
        assert_eq!(records[1], RecordSlot::Parsed(rec));
        let reencoded = encode_message(&WireMessage::SubmitRecords {
            chain_id: ChainId::default(),
            records,
        });
        assert_eq!(reencoded, frame);
    }

    #[test]
    fn blocks_order_and_cap_enforced() {
        let frame = encode_message(&WireMessage::Blocks {
            chain_id: ChainId::default(),
            blocks: vec![block(2, 0), block(1, 0)],
        });
        assert!(decode_message(frame.as_bytes()).is_err());
        let many: Vec<Block> = (0..65).map(|h| block(h, 0)).collect();
        let frame = encode_message(&WireMessage::Blocks {
            chain_id: ChainId::default(),
            blocks: many,
        });
        assert!(decode_message(frame.as_bytes()).is_err());
    }

    #[test]
    fn chunking_respects_count_and_frame_size() {
        let small: Vec<Block> = (0..130).map(|h| block(h, 10)).collect();
        let chunks = chunk_blocks(ChainId::default(), small);
        let sizes: Vec<usize> = chunks
            .iter()
            .map(|m| match m {
                WireMessage::Blocks { blocks, .. } => blocks.len(),
                _ => 0,
            })
            .collect();
        assert_eq!(sizes, vec![64, 64, 2]);

        let big: Vec<Block> = (0..10).map(|h| block(h, MAX_PAYLOAD_BYTES)).collect();
        let chunks = chunk_blocks(ChainId::default(), big);
        assert!(chunks.len() > 1);
        let mut total = 0;
        for m in &chunks {
            assert!(encode_message(m).len() <= MAX_FRAME_BYTES);
            if let WireMessage::Blocks { blocks, .. } = m {
                total += blocks.len();
            }
        }
        assert_eq!(total, 10);
    }
}
