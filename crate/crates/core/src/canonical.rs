// SPDX-License-Identifier: Apache-2.0

//! Canonical document form: compact UTF-8 JSON with lexicographically sorted
//! object keys. Every persisted or hashed document goes through here so the
//! byte form does not depend on serde_json's map backend.

use std::hash::Hasher;

use fnv::FnvHasher;
use serde::Serialize;
use serde_json::Value;

/// Renders `value` in canonical form.
pub fn to_canonical_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, &mut out);
    out
}

/// Serializes any `Serialize` type in canonical form.
pub fn canonical<T: Serialize + ?Sized>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("document types always serialize");
    to_canonical_string(&v)
}

fn write_value(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string keys serialize"));
                out.push(':');
                write_value(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

/// 64-bit FNV-1a over `bytes`, rendered as 16 lowercase hex digits.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h = FnvHasher::default();
    h.write(bytes);
    format!("{:016x}", h.finish())
}
