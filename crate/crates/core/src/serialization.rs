//! Explicit serialization of heap-structured values.
//!
//! Nothing is ever serialized implicitly: a value only travels as a payload
//! if it is [`Plain`](crate::datatype::Plain) or wrapped with
//! [`as_serialized`]. Any `serde` type is accepted.
//!
//! Payload layout:
//!
//! ```text
//! [u8 format][u64 body_len, little-endian][body]
//! ```
//!
//! Format `0x01` is bincode 1.x with its default options (fixed-width
//! little-endian integers, `u64` length prefixes for strings, sequences and
//! maps). Format `0x02` is UTF-8 JSON.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::datatype::Codec;
use crate::error::CodecError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Binary,
    Json,
}

impl Format {
    pub fn tag(self) -> u8 {
        match self {
            Format::Binary => 0x01,
            Format::Json => 0x02,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self, CodecError> {
        match tag {
            0x01 => Ok(Format::Binary),
            0x02 => Ok(Format::Json),
            other => Err(CodecError::UnknownFormat(other)),
        }
    }
}

/// A value marked for serialization, or an empty receive-side slot for one.
#[derive(Debug, Clone, PartialEq)]
pub struct Serialized<T> {
    value: Option<T>,
    format: Format,
}

/// Marks `value` for binary serialization.
pub fn as_serialized<T: Serialize + DeserializeOwned>(value: T) -> Serialized<T> {
    as_serialized_with(value, Format::Binary)
}

pub fn as_serialized_with<T: Serialize + DeserializeOwned>(
    value: T,
    format: Format,
) -> Serialized<T> {
    Serialized {
        value: Some(value),
        format,
    }
}

/// An empty slot that a received payload is deserialized into. The format is
/// taken from the payload itself.
pub fn as_deserializable<T: Serialize + DeserializeOwned>() -> Serialized<T> {
    Serialized {
        value: None,
        format: Format::default(),
    }
}

impl<T> Serialized<T> {
    pub fn format(&self) -> Format {
        self.format
    }

    pub fn value(&self) -> Option<&T> {
        self.value.as_ref()
    }

    pub fn into_inner(self) -> Option<T> {
        self.value
    }
}

impl<T: Serialize + DeserializeOwned> Codec for Serialized<T> {
    const ELEMENT_WIDTH: Option<usize> = None;

    fn encode_payload(&self) -> Result<Vec<u8>, CodecError> {
        let value = self
            .value
            .as_ref()
            .ok_or_else(|| CodecError::Malformed("no value to serialize".into()))?;
        let body = match self.format {
            Format::Binary => {
                bincode::serialize(value).map_err(|e| CodecError::Malformed(e.to_string()))?
            }
            Format::Json => {
                serde_json::to_vec(value).map_err(|e| CodecError::Malformed(e.to_string()))?
            }
        };
        let mut out = Vec::with_capacity(9 + body.len());
        out.push(self.format.tag());
        out.extend_from_slice(&(body.len() as u64).to_le_bytes());
        out.extend(body);
        Ok(out)
    }

    fn decode_payload(bytes: &[u8]) -> Result<Self, CodecError> {
        let (&tag, rest) = bytes
            .split_first()
            .ok_or_else(|| CodecError::Malformed("empty payload".into()))?;
        let format = Format::from_tag(tag)?;
        if rest.len() < 8 {
            return Err(CodecError::Malformed("truncated length prefix".into()));
        }
        let len = u64::from_le_bytes(rest[..8].try_into().unwrap());
        let body = &rest[8..];
        if body.len() as u64 != len {
            return Err(CodecError::Malformed(format!(
                "body length {} does not match prefix {len}",
                body.len()
            )));
        }
        let value = match format {
            Format::Binary => {
                bincode::deserialize(body).map_err(|e| CodecError::Malformed(e.to_string()))?
            }
            Format::Json => {
                serde_json::from_slice(body).map_err(|e| CodecError::Malformed(e.to_string()))?
            }
        };
        Ok(Serialized {
            value: Some(value),
            format,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeMap, HashMap};

    fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug + Clone>(
        v: T,
        f: Format,
    ) {
        let bytes = as_serialized_with(v.clone(), f).encode_payload().unwrap();
        assert_eq!(bytes[0], f.tag());
        let back = Serialized::<T>::decode_payload(&bytes).unwrap();
        assert_eq!(back.format(), f);
        assert_eq!(back.into_inner(), Some(v));
    }

    #[test]
    fn string_map_round_trips() {
        let mut m = HashMap::new();
        m.insert("a".to_string(), "b".to_string());
        round_trip(m.clone(), Format::Binary);
        round_trip(m, Format::Json);
        round_trip(HashMap::<String, String>::new(), Format::Binary);
    }

    #[test]
    fn nested_lists_round_trip() {
        let v = vec![vec!["x".to_string()], vec![], vec!["y".into(), "z".into()]];
        round_trip(v.clone(), Format::Json);
        round_trip(v, Format::Binary);
        let mut nested = BTreeMap::new();
        nested.insert(3u32, vec![Some(1.5f64), None]);
        round_trip(nested, Format::Binary);
    }

    #[test]
    fn binary_layout_is_tag_length_body() {
        let bytes = as_serialized("hi".to_string()).encode_payload().unwrap();
        // bincode: u64 string length then UTF-8 bytes
        let body: Vec<u8> = [2u64.to_le_bytes().as_slice(), b"hi"].concat();
        let mut expect = vec![0x01];
        expect.extend((body.len() as u64).to_le_bytes());
        expect.extend(body);
        assert_eq!(bytes, expect);
    }

    #[test]
    fn bad_payloads() {
        assert!(matches!(
            Serialized::<String>::decode_payload(&[0x7f, 0, 0, 0, 0, 0, 0, 0, 0]),
            Err(CodecError::UnknownFormat(0x7f))
        ));
        assert!(Serialized::<String>::decode_payload(&[]).is_err());
        assert!(Serialized::<String>::decode_payload(&[0x01, 3, 0, 0, 0, 0, 0, 0, 0, 1]).is_err());
        let mut bytes = as_serialized(vec![1u32, 2]).encode_payload().unwrap();
        bytes.truncate(bytes.len() - 1);
        assert!(Serialized::<Vec<u32>>::decode_payload(&bytes).is_err());
        assert!(as_deserializable::<String>().encode_payload().is_err());
    }
}
