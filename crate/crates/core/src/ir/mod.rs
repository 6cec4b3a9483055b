//! Contract documents: a typed, guarded transition system that mocks a
//! service deterministically.
//!
//! A document declares typed variables and a list of transitions. Each
//! transition matches a method and path pattern, optionally guards on an
//! S-expression over the request and the variables, applies effects, and
//! renders a response whose body templates may interpolate `${expr}`
//! fragments. Two capability tiers exist: `v1` documents are limited to
//! comparisons, boolean logic, and scalar assignment; `v2` adds arithmetic,
//! map operations, and dynamic id minting.

pub mod expr;
pub mod generate;
pub mod interp;
pub mod validate;

pub use generate::{generate, GenerationOutcome, GenerationRequest};
pub use interp::IrSession;
pub use validate::{validate, Diagnostic};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Capability tier of a contract document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IrVersion {
    #[serde(rename = "v1")]
    V1,
    #[serde(rename = "v2")]
    V2,
}

impl fmt::Display for IrVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IrVersion::V1 => "v1",
            IrVersion::V2 => "v2",
        })
    }
}

/// Declared type of a contract variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarType {
    /// Numeric variable whose initial value must be an integer.
    Int,
    /// Any numeric variable.
    Number,
    String,
    Bool,
    /// String-keyed map; requires a `v2` document.
    Map,
}

/// One typed variable with its initial value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDecl {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: VarType,
    pub initial: Value,
}

/// Method + path pattern a transition matches. Path segments of the form
/// `{name}` bind path parameters readable via `(req path name)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSpec {
    pub method: String,
    pub path: String,
}

/// Response status: a literal code or an S-expression evaluated per request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StatusSpec {
    Code(u16),
    Expr(String),
}

/// Response description. String values inside `body` may embed `${expr}`
/// fragments; a string that is exactly one fragment injects the evaluated
/// value with its JSON type preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSpec {
    pub status: StatusSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub headers: BTreeMap<String, String>,
}

/// One guarded transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    #[serde(rename = "match")]
    pub matcher: MatchSpec,
    /// Guard S-expression; an absent guard always passes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
    /// Effect S-expressions applied in order when the transition fires.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effects: Vec<String>,
    pub response: ResponseSpec,
}

/// A complete contract document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractIR {
    pub version: IrVersion,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variables: Vec<VarDecl>,
    pub transitions: Vec<TransitionSpec>,
    /// Rendered when no transition matches; defaults to
    /// `404 {"error": "no matching transition"}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_response: Option<ResponseSpec>,
}

impl ContractIR {
    pub fn from_json(value: Value) -> Result<ContractIR, IrError> {
        serde_json::from_value(value).map_err(|e| IrError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ContractIR, IrError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| IrError::Io {
            path: path.as_ref().display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| IrError::Parse(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IrError> {
        let text = serde_json::to_string_pretty(self).expect("document serializes");
        std::fs::write(path.as_ref(), text).map_err(|e| IrError::Io {
            path: path.as_ref().display().to_string(),
            source: e,
        })
    }
}

/// Errors from loading, validating, executing, or generating documents.
#[derive(Debug, Error)]
pub enum IrError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid contract document: {0}")]
    Parse(String),
    #[error("contract document rejected:\n{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("model failed to produce a valid document after {} attempt(s): {message}", attempts.len())]
    Generation {
        /// Raw model replies, one per attempt, kept for inspection.
        attempts: Vec<String>,
        message: String,
    },
    #[error("model transport: {0}")]
    Model(String),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  - {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}
