//! Canonical JSON and SHA-256 digests.
//!
//! Canonical form: object keys sorted lexicographically (by UTF-8 bytes) at every
//! nesting level, no insignificant whitespace, strings escaped exactly as
//! `serde_json` escapes them. Every persisted artifact and every hash preimage in
//! the crate goes through [`write_value`].

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Appends the canonical encoding of `value` to `out`.
pub fn write_value(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push(b'{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                write_value(&map[key], out);
            }
            out.push(b'}');
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out);
            }
            out.push(b']');
        }
        Value::String(s) => write_string(s, out),
        scalar => out.extend_from_slice(scalar.to_string().as_bytes()),
    }
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    // serde_json never fails on a plain str
    out.extend_from_slice(serde_json::to_string(s).expect("string encoding").as_bytes());
}

/// Canonical bytes of a JSON value.
pub fn to_bytes(value: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    write_value(value, &mut out);
    out
}

/// Canonical bytes of any serializable value.
pub fn to_canonical<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let value = serde_json::to_value(value).expect("in-crate types always serialize");
    to_bytes(&value)
}

/// Canonical string of any serializable value.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    String::from_utf8(to_canonical(value)).expect("canonical JSON is UTF-8")
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 over the canonical encoding of `value`.
pub fn digest_of<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(&to_canonical(value))
}

/// True when `s` is a lowercase hex string of exactly `len` characters.
pub fn is_lower_hex(s: &str, len: usize) -> bool {
    s.len() == len && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Serde adapter carrying a `u64` as a decimal string, the only number form the
/// canonical encoding admits.
pub mod u64_str {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        parse_u64(&s).ok_or_else(|| D::Error::custom(format!("non-canonical integer {s:?}")))
    }

    /// Parses a canonical unsigned integer (no sign, no leading zeros).
    pub fn parse_u64(s: &str) -> Option<u64> {
        let v: u64 = s.parse().ok()?;
        (v.to_string() == s).then_some(v)
    }
}

/// A `u64` carried as a decimal string, for use inside collections.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct U64Str(#[serde(with = "u64_str")] pub u64);
