use serde_json::value::RawValue;

use super::{AppError, ChainRecord};
use crate::chaincore::MAX_PAYLOAD_BYTES;

/// Size of `[r1,r2,...]` given the encoded size of each record.
pub fn encoded_payload_len(record_lens: impl IntoIterator<Item = usize>) -> usize {
    let mut n = 0usize;
    let mut total = 2usize;
    for len in record_lens {
        total += len;
        n += 1;
    }
    total + n.saturating_sub(1)
}

/// Canonical payload: a JSON array of canonical records, no whitespace.
pub fn encode_payload(records: &[ChainRecord]) -> Result<Vec<u8>, AppError> {
    let mut out = Vec::with_capacity(records.len() * 400 + 2);
    out.push(b'[');
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            out.push(b',');
        }
        out.extend_from_slice(r.to_json().as_bytes());
        if out.len() + 1 > MAX_PAYLOAD_BYTES {
            return Err(AppError::PayloadTooLarge { len: out.len() + 1 });
        }
    }
    out.push(b']');
    Ok(out)
}

/// Strict decode: any malformed record fails the whole payload.
pub fn decode_payload(bytes: &[u8]) -> Result<Vec<ChainRecord>, AppError> {
    if bytes.len() > MAX_PAYLOAD_BYTES {
        return Err(AppError::PayloadTooLarge { len: bytes.len() });
    }
    decode_payload_lenient(bytes)?.into_iter().collect()
}

/// Decodes the array structure, then each element on its own, so one bad
/// record does not hide the others.
pub fn decode_payload_lenient(bytes: &[u8]) -> Result<Vec<Result<ChainRecord, AppError>>, AppError> {
    let items: Vec<&RawValue> = serde_json::from_slice(bytes).map_err(|e| AppError::Decode(e.to_string()))?;
    Ok(items.into_iter().map(|raw| ChainRecord::from_json(raw.get())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::{make_identity, make_post};
    use crate::chaincore::generate_keypair;

    #[test]
    fn empty_list_is_brackets() {
        assert_eq!(encode_payload(&[]).unwrap(), b"[]");
        assert!(decode_payload(b"[]").unwrap().is_empty());
    }

    #[test]
    fn roundtrip_mixed() {
        let k = generate_keypair(Some([3; 32])).unwrap();
        let recs = vec![
            make_post(&k, "one", None, 1).unwrap(),
            make_identity(&k, "bob", Some("hi")).unwrap(),
        ];
        let bytes = encode_payload(&recs).unwrap();
        assert_eq!(bytes.len(), encoded_payload_len(recs.iter().map(|r| r.to_json().len())));
        assert_eq!(decode_payload(&bytes).unwrap(), recs);
    }

    #[test]
    fn malformed_payload() {
        assert!(matches!(decode_payload(b"{"), Err(AppError::Decode(_))));
        assert!(matches!(decode_payload(b"[1]"), Err(AppError::Decode(_))));
        let lenient = decode_payload_lenient(b"[1,{}]").unwrap();
        assert_eq!(lenient.len(), 2);
        assert!(lenient.iter().all(Result::is_err));
    }
}
