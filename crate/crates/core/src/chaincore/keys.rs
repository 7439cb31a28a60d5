use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use rand::RngCore;
use secp256k1::{ecdsa, Message, SecretKey, SECP256K1};
use sha2::{Digest, Sha256};

use super::{ChainError, ChainId, Hash256, Signature};

pub const PUBLIC_KEY_LEN: usize = 33;

/// secp256k1 group order, big-endian.
const CURVE_ORDER: [u8; 32] = [
    0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xfe, 0xba, 0xae, 0xdc,
    0xe6, 0xaf, 0x48, 0xa0, 0x3b, 0xbf, 0xd2, 0x5e, 0x8c, 0xd0, 0x36, 0x41, 0x41,
];

pub fn sha256(data: &[u8]) -> Hash256 {
    Hash256(Sha256::digest(data).into())
}

/// A validated compressed secp256k1 point.
///
/// Equality, ordering and hashing use the 33 compressed bytes.
#[derive(Clone, Copy)]
pub struct PublicKey {
    bytes: [u8; PUBLIC_KEY_LEN],
    point: secp256k1::PublicKey,
}

impl PublicKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ChainError> {
        let bytes: [u8; PUBLIC_KEY_LEN] = bytes
            .try_into()
            .map_err(|_| ChainError::InvalidKey(format!("expected {PUBLIC_KEY_LEN} bytes, got {}", bytes.len())))?;
        let point = secp256k1::PublicKey::from_slice(&bytes)
            .map_err(|_| ChainError::InvalidKey("not a compressed curve point".into()))?;
        Ok(Self { bytes, point })
    }

    pub fn from_hex(s: &str) -> Result<Self, ChainError> {
        let raw = hex::decode(s).map_err(|e| ChainError::InvalidKey(e.to_string()))?;
        Self::from_bytes(&raw)
    }

    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.bytes
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.bytes)
    }

    /// Verifies a compact low-s ECDSA signature over a 32-byte digest.
    /// High-s signatures are rejected.
    pub fn verify_digest(&self, digest: &Hash256, sig: &Signature) -> bool {
        let Ok(sig) = ecdsa::Signature::from_compact(&sig.0) else {
            return false;
        };
        SECP256K1
            .verify_ecdsa(&Message::from_digest(digest.0), &sig, &self.point)
            .is_ok()
    }
}

impl PartialEq for PublicKey {
    fn eq(&self, other: &Self) -> bool {
        self.bytes == other.bytes
    }
}
impl Eq for PublicKey {}

impl PartialOrd for PublicKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for PublicKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bytes.cmp(&other.bytes)
    }
}
impl Hash for PublicKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.bytes.hash(state)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}
impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}
impl FromStr for PublicKey {
    type Err = ChainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

/// An owner or author key. The private scalar never leaves this type
/// except through [`KeyPair::secret_bytes`].
#[derive(Clone)]
pub struct KeyPair {
    secret: SecretKey,
    public: PublicKey,
}

impl KeyPair {
    pub fn from_secret_bytes(bytes: &[u8; 32]) -> Result<Self, ChainError> {
        let secret = SecretKey::from_byte_array(bytes).map_err(|_| ChainError::InvalidSeed)?;
        let point = secp256k1::PublicKey::from_secret_key(SECP256K1, &secret);
        Ok(Self {
            secret,
            public: PublicKey {
                bytes: point.serialize(),
                point,
            },
        })
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.secret.secret_bytes()
    }

    pub fn chain_id(&self) -> ChainId {
        ChainId(sha256(self.public.as_bytes()).0)
    }

    /// RFC 6979 deterministic nonce; libsecp256k1 always emits low-s.
    pub fn sign_digest(&self, digest: &Hash256) -> Signature {
        let sig = SECP256K1.sign_ecdsa(&Message::from_digest(digest.0), &self.secret);
        Signature(sig.serialize_compact())
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

/// Reduces a 32-byte big-endian integer modulo the curve order. Since
/// 2^256 < 2n a single conditional subtraction suffices.
fn reduce_mod_order(seed: &[u8; 32]) -> [u8; 32] {
    if seed.as_slice() < CURVE_ORDER.as_slice() {
        return *seed;
    }
    let mut out = [0u8; 32];
    let mut borrow = 0i16;
    for i in (0..32).rev() {
        let mut d = seed[i] as i16 - CURVE_ORDER[i] as i16 - borrow;
        borrow = if d < 0 {
            d += 256;
            1
        } else {
            0
        };
        out[i] = d as u8;
    }
    out
}

/// Deterministic when `seed` is given (reduced mod n), otherwise drawn
/// from the OS RNG.
pub fn generate_keypair(seed: Option<[u8; 32]>) -> Result<KeyPair, ChainError> {
    match seed {
        Some(seed) => {
            let scalar = reduce_mod_order(&seed);
            if scalar == [0u8; 32] {
                return Err(ChainError::InvalidSeed);
            }
            KeyPair::from_secret_bytes(&scalar)
        }
        None => loop {
            let mut bytes = [0u8; 32];
            rand::rngs::OsRng.fill_bytes(&mut bytes);
            if let Ok(kp) = KeyPair::from_secret_bytes(&bytes) {
                return Ok(kp);
            }
        },
    }
}

/// SHA-256 of the 33-byte compressed owner key.
pub fn derive_chain_id(owner_pub: &[u8]) -> Result<ChainId, ChainError> {
    let key = PublicKey::from_bytes(owner_pub)?;
    Ok(ChainId(sha256(key.as_bytes()).0))
}
