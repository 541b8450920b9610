//! Canonical JSON encoding for everything that gets hashed or signed.
//!
//! The encoding follows RFC 8785 restricted to a float-free subset: objects
//! with string keys, arrays, strings, integers and booleans. Object keys are
//! sorted by Unicode code point, there is no insignificant whitespace,
//! integers are written in shortest decimal form and strings use the minimal
//! JSON escape set (`"`, `\`, and control characters below U+0020).
//!
//! `null` and every non-integer number are rejected, so two implementations
//! that agree on the domain value always agree on the bytes.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::hash::ContentHash;

#[derive(Debug, thiserror::Error)]
pub enum CanonicalError {
    #[error("unencodable value at {path}: {what}")]
    UnencodableValue { path: String, what: &'static str },
    #[error("malformed JSON: {0}")]
    Syntax(String),
    #[error("document does not match schema: {0}")]
    Schema(String),
    #[error("document is valid JSON but not in canonical form")]
    NotCanonical,
}

/// Encodes a JSON value canonically.
pub fn canonicalize(value: &Value) -> Result<Vec<u8>, CanonicalError> {
    let mut out = Vec::with_capacity(128);
    write_value(value, &mut out, &mut String::from("$"))?;
    Ok(out)
}

/// Serializes a domain value and encodes it canonically.
pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    let value = serde_json::to_value(value).map_err(|e| CanonicalError::UnencodableValue {
        path: "$".into(),
        what: if e.to_string().contains("key must be a string") {
            "non-string map key"
        } else {
            "value not representable as JSON"
        },
    })?;
    canonicalize(&value)
}

/// SHA-256 of the canonical encoding.
pub fn canonical_hash<T: Serialize + ?Sized>(value: &T) -> Result<ContentHash, CanonicalError> {
    Ok(ContentHash::of(&to_canonical_bytes(value)?))
}

/// Parses JSON text into a value, rejecting anything outside the
/// float-free subset. The input does not need to be canonical.
pub fn parse(bytes: &[u8]) -> Result<Value, CanonicalError> {
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| CanonicalError::Syntax(e.to_string()))?;
    check_encodable(&value, &mut String::from("$"))?;
    Ok(value)
}

/// Parses a document into a domain type.
pub fn from_slice<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CanonicalError> {
    let value = parse(bytes)?;
    serde_json::from_value(value).map_err(|e| CanonicalError::Schema(e.to_string()))
}

/// Parses a document that must already be byte-for-byte canonical.
///
/// Used for signed material: any alternative spelling of the same value is
/// refused, so a signature covers exactly one byte string.
pub fn from_canonical_slice<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CanonicalError> {
    let value = parse(bytes)?;
    if canonicalize(&value)? != bytes {
        return Err(CanonicalError::NotCanonical);
    }
    serde_json::from_value(value).map_err(|e| CanonicalError::Schema(e.to_string()))
}

/// Pretty, human-oriented rendering. Never hashed.
pub fn to_pretty<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).unwrap_or_default()
}

fn check_encodable(value: &Value, path: &mut String) -> Result<(), CanonicalError> {
    match value {
        Value::Null => Err(CanonicalError::UnencodableValue {
            path: path.clone(),
            what: "null",
        }),
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => Err(CanonicalError::UnencodableValue {
            path: path.clone(),
            what: "non-integer number",
        }),
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                let len = path.len();
                path.push_str(&format!("[{i}]"));
                check_encodable(item, path)?;
                path.truncate(len);
            }
            Ok(())
        }
        Value::Object(map) => {
            for (k, v) in map {
                let len = path.len();
                path.push('.');
                path.push_str(k);
                check_encodable(v, path)?;
                path.truncate(len);
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn write_value(value: &Value, out: &mut Vec<u8>, path: &mut String) -> Result<(), CanonicalError> {
    match value {
        Value::Null => {
            return Err(CanonicalError::UnencodableValue {
                path: path.clone(),
                what: "null",
            })
        }
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.extend_from_slice(i.to_string().as_bytes());
            } else if let Some(u) = n.as_u64() {
                out.extend_from_slice(u.to_string().as_bytes());
            } else {
                return Err(CanonicalError::UnencodableValue {
                    path: path.clone(),
                    what: "non-integer number",
                });
            }
        }
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                let len = path.len();
                path.push_str(&format!("[{i}]"));
                write_value(item, out, path)?;
                path.truncate(len);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            // str ordering is byte ordering of UTF-8, which is code point order.
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_unstable_by(|a, b| a.0.cmp(b.0));
            out.push(b'{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(k, out);
                out.push(b':');
                let len = path.len();
                path.push('.');
                path.push_str(k);
                write_value(v, out, path)?;
                path.truncate(len);
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    out.push(b'"');
    for ch in s.chars() {
        match ch {
            '"' => out.extend_from_slice(b"\\\""),
            '\\' => out.extend_from_slice(b"\\\\"),
            '\u{08}' => out.extend_from_slice(b"\\b"),
            '\u{0c}' => out.extend_from_slice(b"\\f"),
            '\n' => out.extend_from_slice(b"\\n"),
            '\r' => out.extend_from_slice(b"\\r"),
            '\t' => out.extend_from_slice(b"\\t"),
            c if (c as u32) < 0x20 => {
                out.extend_from_slice(format!("\\u{:04x}", c as u32).as_bytes());
            }
            c => {
                let mut buf = [0u8; 4];
                out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            }
        }
    }
    out.push(b'"');
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::collections::HashMap;

    fn enc(v: Value) -> String {
        String::from_utf8(canonicalize(&v).unwrap()).unwrap()
    }

    #[test]
    fn key_order_does_not_matter() {
        let a = parse(br#"{"b":2,"a":1}"#).unwrap();
        let b = parse(br#"{ "a" : 1, "b" : 2 }"#).unwrap();
        assert_eq!(canonicalize(&a).unwrap(), canonicalize(&b).unwrap());
        assert_eq!(enc(a), r#"{"a":1,"b":2}"#);
    }

    #[test]
    fn nested_and_arrays() {
        let v = json!({"z": [3, {"y": true, "x": false}], "a": "s", "m": -12});
        assert_eq!(enc(v), r#"{"a":"s","m":-12,"z":[3,{"x":false,"y":true}]}"#);
    }

    #[test]
    fn string_escaping_is_minimal() {
        let v = json!("q\"b\\n\n\t\u{01}/é\u{7f}");
        assert_eq!(enc(v), "\"q\\\"b\\\\n\\n\\t\\u0001/é\u{7f}\"");
    }

    #[test]
    fn keys_sort_by_code_point() {
        let v = json!({"\u{e000}": 1, "\u{1f600}": 2, "Z": 3, "a": 4});
        assert_eq!(enc(v), "{\"Z\":3,\"a\":4,\"\u{e000}\":1,\"\u{1f600}\":2}");
    }

    #[test]
    fn floats_and_nulls_rejected() {
        assert!(matches!(
            parse(br#"{"a":1.5}"#),
            Err(CanonicalError::UnencodableValue { .. })
        ));
        assert!(matches!(parse(br#"[1e3]"#), Err(CanonicalError::UnencodableValue { .. })));
        assert!(matches!(
            canonicalize(&json!({"a": 0.25})),
            Err(CanonicalError::UnencodableValue { .. })
        ));
        assert!(matches!(
            canonicalize(&json!([null])),
            Err(CanonicalError::UnencodableValue { .. })
        ));
    }

    #[test]
    fn non_string_keys_rejected() {
        let mut m: HashMap<(u8, u8), u8> = HashMap::new();
        m.insert((1, 2), 3);
        assert!(matches!(
            to_canonical_bytes(&m),
            Err(CanonicalError::UnencodableValue { .. })
        ));
    }

    #[test]
    fn integer_extremes() {
        assert_eq!(enc(json!([i64::MIN, u64::MAX, 0])), format!("[{},{},0]", i64::MIN, u64::MAX));
    }

    #[test]
    fn strict_parse_refuses_alternate_spellings() {
        #[derive(serde::Deserialize, Debug)]
        struct T {
            #[allow(dead_code)]
            a: u32,
        }
        assert!(from_canonical_slice::<T>(br#"{"a":1}"#).is_ok());
        assert!(matches!(
            from_canonical_slice::<T>(br#"{ "a":1}"#),
            Err(CanonicalError::NotCanonical)
        ));
        assert!(matches!(
            from_canonical_slice::<T>(br#"{"a":"\u0041"}"#),
            Err(CanonicalError::NotCanonical)
        ));
    }
}
