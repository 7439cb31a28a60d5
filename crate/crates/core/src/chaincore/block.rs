use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::keys::{sha256, PublicKey, PUBLIC_KEY_LEN};
use super::ChainError;

pub const BLOCK_VERSION: u8 = 0x01;
/// 1 MiB.
pub const MAX_PAYLOAD_BYTES: usize = 1 << 20;
/// version ‖ chain_id ‖ height ‖ time ‖ prev_hash ‖ payload_length
pub const HEADER_LEN: usize = 1 + 32 + 8 + 8 + 32 + 4;
pub const SIGNATURE_LEN: usize = 64;

macro_rules! hex_newtype {
    ($name:ident, $len:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; $len]);

        impl Default for $name {
            fn default() -> Self {
                Self([0u8; $len])
            }
        }

        impl $name {
            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
                let mut out = [0u8; $len];
                hex::decode_to_slice(s, &mut out)?;
                Ok(Self(out))
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "({})"), self.to_hex())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl FromStr for $name {
            type Err = hex::FromHexError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::from_hex(s)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
                Self::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_newtype!(Hash256, 32);
hex_newtype!(ChainId, 32);
hex_newtype!(Signature, 64);

impl Hash256 {
    pub const ZERO: Hash256 = Hash256([0u8; 32]);

    pub fn is_zero(&self) -> bool {
        self.0 == [0u8; 32]
    }
}

/// The unsealed fields of a block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockDraft {
    pub chain_id: ChainId,
    pub height: u64,
    pub time: u64,
    pub prev_hash: Hash256,
    pub payload: Vec<u8>,
}

/// Canonical preimage of a block hash:
/// `0x01 ‖ chain_id ‖ height(BE) ‖ time(BE) ‖ prev_hash ‖ len(BE u32) ‖ payload`.
pub fn canonical_block_bytes(
    chain_id: &ChainId,
    height: u64,
    time: u64,
    prev_hash: &Hash256,
    payload: &[u8],
) -> Result<Vec<u8>, ChainError> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + SIGNATURE_LEN);
    write_canonical(&mut out, chain_id, height, time, prev_hash, payload)?;
    Ok(out)
}

fn write_canonical(
    out: &mut Vec<u8>,
    chain_id: &ChainId,
    height: u64,
    time: u64,
    prev_hash: &Hash256,
    payload: &[u8],
) -> Result<(), ChainError> {
    if payload.len() > MAX_PAYLOAD_BYTES {
        return Err(ChainError::PayloadTooLarge {
            len: payload.len(),
            max: MAX_PAYLOAD_BYTES,
        });
    }
    out.push(BLOCK_VERSION);
    out.extend_from_slice(&chain_id.0);
    out.extend_from_slice(&height.to_be_bytes());
    out.extend_from_slice(&time.to_be_bytes());
    out.extend_from_slice(&prev_hash.0);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    Ok(())
}

/// A sealed block. Fields are public so that callers holding a block can
/// inspect it; nothing here is trusted until [`super::verify_block`] passes.
#[derive(Clone, PartialEq, Eq)]
pub struct Block {
    pub chain_id: ChainId,
    pub height: u64,
    pub time: u64,
    pub prev_hash: Hash256,
    pub hash: Hash256,
    pub signature: Signature,
    pub payload: Vec<u8>,
}

impl Block {
    pub fn is_genesis(&self) -> bool {
        self.height == 0
    }

    pub fn canonical_bytes(&self) -> Result<Vec<u8>, ChainError> {
        canonical_block_bytes(&self.chain_id, self.height, self.time, &self.prev_hash, &self.payload)
    }

    /// Hash recomputed from the current field values.
    pub fn compute_hash(&self) -> Result<Hash256, ChainError> {
        Ok(sha256(&self.canonical_bytes()?))
    }

    pub fn serialized_len(&self) -> usize {
        HEADER_LEN + self.payload.len() + SIGNATURE_LEN
    }

    /// Full serialized form: canonical bytes followed by the signature.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        // Payload size is bounded at construction and decode; a block that
        // was mutated past the limit still serializes so it can be rejected
        // downstream.
        out.push(BLOCK_VERSION);
        out.extend_from_slice(&self.chain_id.0);
        out.extend_from_slice(&self.height.to_be_bytes());
        out.extend_from_slice(&self.time.to_be_bytes());
        out.extend_from_slice(&self.prev_hash.0);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.signature.0);
        out
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    /// Parses the serialized form and recomputes `hash`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Block, ChainError> {
        let bad = |m: &str| ChainError::MalformedBlock(m.to_string());
        if bytes.len() < HEADER_LEN + SIGNATURE_LEN {
            return Err(bad("truncated block"));
        }
        if bytes[0] != BLOCK_VERSION {
            return Err(bad("unknown block version"));
        }
        let take32 = |at: usize| -> [u8; 32] { bytes[at..at + 32].try_into().unwrap() };
        let take8 = |at: usize| -> u64 { u64::from_be_bytes(bytes[at..at + 8].try_into().unwrap()) };
        let chain_id = ChainId(take32(1));
        let height = take8(33);
        let time = take8(41);
        let prev_hash = Hash256(take32(49));
        let len = u32::from_be_bytes(bytes[81..85].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD_BYTES {
            return Err(ChainError::PayloadTooLarge {
                len,
                max: MAX_PAYLOAD_BYTES,
            });
        }
        if bytes.len() != HEADER_LEN + len + SIGNATURE_LEN {
            return Err(bad("length field disagrees with block size"));
        }
        let body_end = HEADER_LEN + len;
        let hash = sha256(&bytes[..body_end]);
        Ok(Block {
            chain_id,
            height,
            time,
            prev_hash,
            hash,
            signature: Signature(bytes[body_end..].try_into().unwrap()),
            payload: bytes[HEADER_LEN..body_end].to_vec(),
        })
    }

    pub fn from_hex(s: &str) -> Result<Block, ChainError> {
        let raw = hex::decode(s.trim()).map_err(|e| ChainError::MalformedBlock(e.to_string()))?;
        Block::from_bytes(&raw)
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Block")
            .field("chain_id", &self.chain_id)
            .field("height", &self.height)
            .field("time", &self.time)
            .field("prev_hash", &self.prev_hash)
            .field("hash", &self.hash)
            .field("payload_len", &self.payload.len())
            .finish()
    }
}

/// Genesis payloads start with the owner's compressed key so any holder of
/// the genesis block can check the chain id without a registry; the rest
/// is a free-form UTF-8 label.
pub fn genesis_payload(owner: &PublicKey, label: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(PUBLIC_KEY_LEN + label.len());
    out.extend_from_slice(owner.as_bytes());
    out.extend_from_slice(label.as_bytes());
    out
}

/// Extracts the owner key and label embedded in a genesis payload.
pub fn genesis_owner(block: &Block) -> Result<(PublicKey, String), ChainError> {
    if block.payload.len() < PUBLIC_KEY_LEN {
        return Err(ChainError::MalformedBlock("genesis payload lacks owner key".into()));
    }
    let key = PublicKey::from_bytes(&block.payload[..PUBLIC_KEY_LEN])?;
    let label = String::from_utf8_lossy(&block.payload[PUBLIC_KEY_LEN..]).into_owned();
    Ok((key, label))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_header_is_85_bytes() {
        let bytes = canonical_block_bytes(&ChainId::default(), 0, 0, &Hash256::ZERO, &[]).unwrap();
        assert_eq!(bytes.len(), 85);
        assert_eq!(bytes[0], 0x01);
        assert!(bytes[1..].iter().all(|b| *b == 0));
    }

    #[test]
    fn payload_layout() {
        let bytes = canonical_block_bytes(&ChainId::default(), 0, 0, &Hash256::ZERO, b"ab").unwrap();
        assert_eq!(bytes.len(), 87);
        assert_eq!(&bytes[81..85], &[0, 0, 0, 2]);
        assert_eq!(&bytes[85..], &[0x61, 0x62]);
    }

    #[test]
    fn integer_fields_are_big_endian() {
        let bytes = canonical_block_bytes(
            &ChainId([0xaa; 32]),
            0x0102030405060708,
            0x1112131415161718,
            &Hash256([0xbb; 32]),
            &[],
        )
        .unwrap();
        assert_eq!(&bytes[33..41], &[1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(&bytes[41..49], &[0x11, 0x12, 0x13, 0x14, 0x15, 0x16, 0x17, 0x18]);
        assert!(bytes[1..33].iter().all(|b| *b == 0xaa));
        assert!(bytes[49..81].iter().all(|b| *b == 0xbb));
    }

    #[test]
    fn oversize_payload_rejected() {
        let payload = vec![0u8; MAX_PAYLOAD_BYTES + 1];
        assert!(matches!(
            canonical_block_bytes(&ChainId::default(), 0, 0, &Hash256::ZERO, &payload),
            Err(ChainError::PayloadTooLarge { len: 1_048_577, .. })
        ));
        let payload = vec![0u8; MAX_PAYLOAD_BYTES];
        assert!(canonical_block_bytes(&ChainId::default(), 0, 0, &Hash256::ZERO, &payload).is_ok());
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(Block::from_bytes(&[]).is_err());
        assert!(Block::from_bytes(&[0x02; 200]).is_err());
        let mut bytes = vec![0u8; HEADER_LEN + SIGNATURE_LEN];
        bytes[0] = BLOCK_VERSION;
        assert!(Block::from_bytes(&bytes).is_ok());
        bytes.push(0);
        assert!(Block::from_bytes(&bytes).is_err());
    }
}
