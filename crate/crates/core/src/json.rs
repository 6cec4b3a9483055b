//! JSON helpers shared across the engines: canonical serialization,
//! body-shape comparison, and extraction of a JSON object from free text.

use serde_json::Value;
use std::collections::BTreeSet;
use thiserror::Error;

// ============================================================================
// Canonical serialization
// ============================================================================

/// Serializes a JSON value into a canonical text form: object keys sorted,
/// no insignificant whitespace, and integer-valued floats written as
/// integers (`2.0` and `2` canonicalize identically).
///
/// Used wherever two bodies must be compared or used as a map key.
pub fn canonical(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(n, out),
        Value::String(_) => {
            // serde_json handles escaping; a bare string always serializes.
            out.push_str(&serde_json::to_string(value).expect("string serializes"));
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            // serde_json's default map is sorted, but sort defensively so the
            // canonical form does not depend on feature flags.
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("string serializes"));
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
    }
}

fn write_number(n: &serde_json::Number, out: &mut String) {
    if let Some(i) = n.as_i64() {
        out.push_str(&i.to_string());
    } else if let Some(u) = n.as_u64() {
        out.push_str(&u.to_string());
    } else if let Some(f) = n.as_f64() {
        // Safe integer range for f64; outside it, integer-valued floats are
        // left in float form rather than silently losing precision.
        const MAX_SAFE: f64 = 9_007_199_254_740_992.0;
        if f.is_finite() && f.fract() == 0.0 && f.abs() < MAX_SAFE {
            out.push_str(&format!("{}", f as i64));
        } else {
            out.push_str(&n.to_string());
        }
    } else {
        out.push_str(&n.to_string());
    }
}

// ============================================================================
// Body shapes
// ============================================================================

/// The structural "shape" of a response body, used by the fidelity metrics:
/// only the top level of the body is examined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BodyShape {
    /// No body at all (e.g. a 204).
    Absent,
    /// A JSON object, identified by its set of top-level keys.
    Object(BTreeSet<String>),
    /// A JSON list. List element structure is deliberately not compared.
    List,
    /// A bare scalar (string, number, boolean, or null).
    Scalar,
}

impl BodyShape {
    /// Classifies an optional body.
    pub fn of(body: Option<&Value>) -> BodyShape {
        match body {
            None => BodyShape::Absent,
            Some(Value::Object(map)) => {
                BodyShape::Object(map.keys().cloned().collect())
            }
            Some(Value::Array(_)) => BodyShape::List,
            Some(_) => BodyShape::Scalar,
        }
    }

    /// Whether two shapes count as matching: objects must have equal key
    /// sets, lists match lists regardless of contents, absent matches only
    /// absent, scalars match scalars.
    pub fn matches(&self, other: &BodyShape) -> bool {
        match (self, other) {
            (BodyShape::Object(a), BodyShape::Object(b)) => a == b,
            (BodyShape::List, BodyShape::List) => true,
            (BodyShape::Absent, BodyShape::Absent) => true,
            (BodyShape::Scalar, BodyShape::Scalar) => true,
            _ => false,
        }
    }
}

/// Compares two optional bodies by shape. This is the body half of the
/// fidelity metric; status codes are compared separately by the harness.
pub fn compare_body_shape(live: Option<&Value>, sim: Option<&Value>) -> bool {
    BodyShape::of(live).matches(&BodyShape::of(sim))
}

// ============================================================================
// Extracting a JSON object from model output
// ============================================================================

/// Why a piece of free text could not be reduced to a single JSON object.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no JSON object found in reply")]
    NoObject,
    #[error("multiple JSON objects found in reply")]
    MultipleObjects,
    #[error("JSON object failed to parse: {0}")]
    Invalid(String),
}

/// Extracts exactly one JSON object from free text.
///
/// The text may surround the object with prose or code fences, but it must
/// contain exactly one top-level `{...}` region that parses as an object;
/// zero or several regions are errors. Brace matching is string-aware so
/// braces inside JSON strings do not confuse the scan.
pub fn extract_single_object(text: &str) -> Result<Value, ExtractError> {
    let mut regions: Vec<&str> = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            match scan_balanced(bytes, i) {
                Some(end) => {
                    regions.push(&text[i..=end]);
                    i = end + 1;
                }
                None => break, // unbalanced tail; nothing further can close
            }
        } else {
            i += 1;
        }
    }

    match regions.len() {
        0 => Err(ExtractError::NoObject),
        1 => match serde_json::from_str::<Value>(regions[0]) {
            Ok(Value::Object(map)) => Ok(Value::Object(map)),
            Ok(_) => Err(ExtractError::NoObject),
            Err(e) => Err(ExtractError::Invalid(e.to_string())),
        },
        _ => Err(ExtractError::MultipleObjects),
    }
}

/// Finds the byte index of the `}` closing the `{` at `start`, honoring
/// string literals and escapes. Returns `None` if the region never closes.
fn scan_balanced(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    let mut i = start;
    while i < bytes.len() {
        let b = bytes[i];
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
        } else {
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(i);
                    }
                }
                _ => {}
            }
        }
        i += 1;
    }
    None
}

/// Truncates a string to at most `limit` characters, never splitting a
/// character. Returns the string unchanged when it already fits.
pub fn truncate_chars(s: &str, limit: usize) -> &str {
    match s.char_indices().nth(limit) {
        Some((byte_idx, _)) => &s[..byte_idx],
        None => s,
    }
}
