//! The response contract every mock engine produces, and the parser that
//! holds model output to that contract.

use crate::json::{extract_single_object, ExtractError};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use thiserror::Error;

/// A mock engine's answer to one HTTP request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockResponse {
    /// HTTP status code, always within 100..=599.
    pub status: u16,
    /// Response body; when present it is a JSON object or list. `None`
    /// renders as an empty body (the natural shape for a 204).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<Value>,
    /// Optional response headers.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub headers: BTreeMap<String, String>,
}

impl MockResponse {
    /// A response with a JSON body and no extra headers.
    pub fn json(status: u16, body: Value) -> MockResponse {
        MockResponse {
            status,
            body: Some(body),
            headers: BTreeMap::new(),
        }
    }

    /// A body-less response (e.g. 204).
    pub fn empty(status: u16) -> MockResponse {
        MockResponse {
            status,
            body: None,
            headers: BTreeMap::new(),
        }
    }

    /// The standard `{"error": ...}` body used for engine-level conditions.
    pub fn error(status: u16, message: &str) -> MockResponse {
        MockResponse::json(status, serde_json::json!({ "error": message }))
    }
}

/// Why a model reply could not be used as a [`MockResponse`].
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplyError {
    #[error("{0}")]
    Extract(#[from] ExtractError),
    #[error("reply object has no \"status\" field")]
    MissingStatus,
    #[error("\"status\" is not an integer HTTP status in 100..=599")]
    BadStatus,
    #[error("\"body\" must be a JSON object or list when present")]
    BadBody,
    #[error("\"headers\" must be an object with string values when present")]
    BadHeaders,
}

/// Parses free-form model output into a [`MockResponse`].
///
/// The reply must contain exactly one JSON object, which must carry an
/// integer `status` in 100..=599; `body` (object or list) and `headers`
/// (string map) are optional. `null` for either is treated as absent.
pub fn parse_reply(text: &str) -> Result<MockResponse, ReplyError> {
    let obj = extract_single_object(text)?;
    let map = obj.as_object().expect("extractor returns objects");

    let status_val = map.get("status").ok_or(ReplyError::MissingStatus)?;
    let status = status_val
        .as_u64()
        .filter(|s| (100..=599).contains(s))
        .ok_or(ReplyError::BadStatus)? as u16;

    let body = match map.get("body") {
        None | Some(Value::Null) => None,
        Some(v @ Value::Object(_)) | Some(v @ Value::Array(_)) => Some(v.clone()),
        Some(_) => return Err(ReplyError::BadBody),
    };

    let headers = match map.get("headers") {
        None | Some(Value::Null) => BTreeMap::new(),
        Some(Value::Object(h)) => {
            let mut out = BTreeMap::new();
            for (k, v) in h {
                match v.as_str() {
                    Some(s) => {
                        out.insert(k.clone(), s.to_string());
                    }
                    None => return Err(ReplyError::BadHeaders),
                }
            }
            out
        }
        Some(_) => return Err(ReplyError::BadHeaders),
    };

    Ok(MockResponse {
        status,
        body,
        headers,
    })
}
