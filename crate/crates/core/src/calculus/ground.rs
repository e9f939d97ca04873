//! Canonical byte encoding of ground values.
//!
//! Each value is `tag:u8 ‖ len:u64be ‖ body`. Pairs nest two encodings in
//! their body. Decoding is strict: trailing bytes, bad lengths, non-canonical
//! labels and invalid UTF-8 are rejected, so `decode(encode(v)) == v` and
//! `encode` is injective.

use crate::label::{format_label, parse_label};

use super::ast::GroundValue;

const TAG_UNIT: u8 = 0;
const TAG_BOOL: u8 = 1;
const TAG_INT: u8 = 2;
const TAG_TEXT: u8 = 3;
const TAG_LABEL: u8 = 4;
const TAG_PAIR: u8 = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed ground value encoding")]
pub struct DecodeError;

pub fn encode_ground(v: &GroundValue) -> Vec<u8> {
    let mut out = Vec::new();
    encode_into(v, &mut out);
    out
}

fn put(out: &mut Vec<u8>, tag: u8, body: &[u8]) {
    out.push(tag);
    out.extend_from_slice(&(body.len() as u64).to_be_bytes());
    out.extend_from_slice(body);
}

fn encode_into(v: &GroundValue, out: &mut Vec<u8>) {
    match v {
        GroundValue::Unit => put(out, TAG_UNIT, &[]),
        GroundValue::Bool(b) => put(out, TAG_BOOL, &[*b as u8]),
        GroundValue::Int(n) => put(out, TAG_INT, &n.to_be_bytes()),
        GroundValue::Text(s) => put(out, TAG_TEXT, s.as_bytes()),
        GroundValue::Label(l) => put(out, TAG_LABEL, format_label(l).as_bytes()),
        GroundValue::Pair(a, b) => {
            let mut body = Vec::new();
            encode_into(a, &mut body);
            encode_into(b, &mut body);
            put(out, TAG_PAIR, &body);
        }
    }
}

pub fn decode_ground(bytes: &[u8]) -> Result<GroundValue, DecodeError> {
    let (v, rest) = decode_prefix(bytes)?;
    if rest.is_empty() {
        Ok(v)
    } else {
        Err(DecodeError)
    }
}

/// Decode one value from the front of `bytes`, returning the remainder.
pub fn decode_prefix(bytes: &[u8]) -> Result<(GroundValue, &[u8]), DecodeError> {
    if bytes.len() < 9 {
        return Err(DecodeError);
    }
    let tag = bytes[0];
    let len = u64::from_be_bytes(bytes[1..9].try_into().unwrap());
    let rest = &bytes[9..];
    if len > rest.len() as u64 {
        return Err(DecodeError);
    }
    let (body, rest) = rest.split_at(len as usize);
    let v = match tag {
        TAG_UNIT if body.is_empty() => GroundValue::Unit,
        TAG_BOOL if body == [0] => GroundValue::Bool(false),
        TAG_BOOL if body == [1] => GroundValue::Bool(true),
        TAG_INT if body.len() == 8 => GroundValue::Int(i64::from_be_bytes(body.try_into().unwrap())),
        TAG_TEXT => GroundValue::Text(String::from_utf8(body.to_vec()).map_err(|_| DecodeError)?),
        TAG_LABEL => {
            let text = std::str::from_utf8(body).map_err(|_| DecodeError)?;
            let l = parse_label(text).map_err(|_| DecodeError)?;
            if format_label(&l) != text {
                return Err(DecodeError);
            }
            GroundValue::Label(l)
        }
        TAG_PAIR => {
            let (a, tail) = decode_prefix(body)?;
            let b = decode_ground(tail)?;
            GroundValue::pair(a, b)
        }
        _ => return Err(DecodeError),
    };
    Ok((v, rest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int_layout() {
        let bytes = encode_ground(&GroundValue::Int(-2));
        assert_eq!(bytes[0], TAG_INT);
        assert_eq!(&bytes[1..9], &8u64.to_be_bytes());
        assert_eq!(&bytes[9..], &(-2i64).to_be_bytes());
    }

    #[test]
    fn nested_roundtrip() {
        let v = GroundValue::pair(
            GroundValue::text("x"),
            GroundValue::pair(GroundValue::Bool(true), GroundValue::Label(parse_label("A | B | True").unwrap())),
        );
        assert_eq!(decode_ground(&encode_ground(&v)).unwrap(), v);
    }

    #[test]
    fn rejects_trailing_and_truncated() {
        let mut bytes = encode_ground(&GroundValue::Unit);
        bytes.push(0);
        assert!(decode_ground(&bytes).is_err());
        let bytes = encode_ground(&GroundValue::Int(5));
        assert!(decode_ground(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_ground(&[TAG_BOOL, 0, 0, 0, 0, 0, 0, 0, 1, 2]).is_err());
    }

    #[test]
    fn rejects_non_canonical_label() {
        let text = "B ∧ A | True | True";
        let mut bytes = vec![TAG_LABEL];
        bytes.extend_from_slice(&(text.len() as u64).to_be_bytes());
        bytes.extend_from_slice(text.as_bytes());
        assert!(decode_ground(&bytes).is_err());
    }
}
