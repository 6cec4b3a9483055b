//! Scenario-based evaluation: drive the same call sequences against a live
//! service and a simulated one, then compare what came back.
//!
//! A *suite* file declares scenarios — named, categorized call sequences.
//! Calls can capture values out of earlier responses (`extract`) and splice
//! them into later paths and bodies via `__marker__` placeholders, which is
//! what lets a scenario chase server-minted ids. Extraction and substitution
//! happen independently per side: the live run chases live ids, the
//! simulated run chases simulated ids, and neither sees the other's values.
//!
//! [`runner`] executes the five-step protocol per scenario; [`report`]
//! aggregates fidelity rates and writes the output files.

pub mod report;
pub mod runner;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

/// What kind of behavior a scenario exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    BasicCrud,
    ErrorHandling,
    CodeReasoning,
    StatefulLifecycle,
    Generalization,
    Pagination,
    AuthLifecycle,
    AsyncLifecycle,
    StressTests,
}

impl Category {
    pub fn label(self) -> &'static str {
        match self {
            Category::BasicCrud => "basic_crud",
            Category::ErrorHandling => "error_handling",
            Category::CodeReasoning => "code_reasoning",
            Category::StatefulLifecycle => "stateful_lifecycle",
            Category::Generalization => "generalization",
            Category::Pagination => "pagination",
            Category::AuthLifecycle => "auth_lifecycle",
            Category::AsyncLifecycle => "async_lifecycle",
            Category::StressTests => "stress_tests",
        }
    }
}

/// How far a scenario strays from what captured traffic would contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Novelty {
    /// The capture workload performs this exact kind of interaction.
    TraceRepresented,
    /// Familiar endpoints, unseen parameter values.
    ParameterNovel,
    /// Produces errors the captured traffic never contains.
    ErrorNovel,
    /// Outcome only derivable by reasoning about the service's logic.
    CodeReasoning,
}

impl Novelty {
    pub fn label(self) -> &'static str {
        match self {
            Novelty::TraceRepresented => "trace_represented",
            Novelty::ParameterNovel => "parameter_novel",
            Novelty::ErrorNovel => "error_novel",
            Novelty::CodeReasoning => "code_reasoning",
        }
    }
}

/// One call in a scenario. `path` and string values inside `body` and
/// `query` may reference earlier extractions as `__marker__`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallSpec {
    pub method: String,
    pub path: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub query: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<Value>,
    /// Marker name → JSON pointer into this call's response body.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extract: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub category: Category,
    pub novelty: Novelty,
    pub calls: Vec<CallSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("suite parse: {0}")]
    Parse(String),
    #[error("invalid suite:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

/// Finds `__marker__` references in a template string.
pub(crate) fn marker_refs(text: &str) -> Vec<&str> {
    let re = marker_regex();
    re.captures_iter(text)
        .map(|c| c.get(1).expect("group 1").as_str())
        .collect()
}

pub(crate) fn marker_regex() -> &'static regex::Regex {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| regex::Regex::new("__([a-z0-9]+(?:_[a-z0-9]+)*)__").expect("static regex"))
}

fn walk_strings<'a>(value: &'a Value, out: &mut Vec<&'a str>) {
    match value {
        Value::String(s) => out.push(s),
        Value::Array(items) => items.iter().for_each(|v| walk_strings(v, out)),
        Value::Object(map) => map.values().for_each(|v| walk_strings(v, out)),
        _ => {}
    }
}

impl Suite {
    pub fn load(path: impl AsRef<Path>) -> Result<Suite, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let suite: Suite =
            serde_json::from_str(&text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        let problems = suite.validate();
        if problems.is_empty() {
            Ok(suite)
        } else {
            Err(HarnessError::Invalid(problems))
        }
    }

    /// Structural checks beyond what serde enforces: unique scenario names,
    /// well-formed marker names and JSON pointers, and define-before-use
    /// for every marker reference.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.name.is_empty() {
            problems.push("suite name is empty".to_string());
        }
        if self.scenarios.is_empty() {
            problems.push("suite has no scenarios".to_string());
        }
        let mut seen = std::collections::BTreeSet::new();
        for scenario in &self.scenarios {
            let sname = &scenario.name;
            if sname.is_empty() {
                problems.push("scenario with empty name".to_string());
                continue;
            }
            if !seen.insert(sname.clone()) {
                problems.push(format!("duplicate scenario name {sname:?}"));
            }
            if scenario.calls.is_empty() {
                problems.push(format!("{sname}: no calls"));
            }
            let mut defined: std::collections::BTreeSet<&str> = Default::default();
            for (i, call) in scenario.calls.iter().enumerate() {
                if !crate::trace::METHODS.contains(&call.method.as_str()) {
                    problems.push(format!(
                        "{sname} call {i}: unknown method {:?}",
                        call.method
                    ));
                }
                if !call.path.starts_with('/') {
                    problems.push(format!(
                        "{sname} call {i}: path {:?} does not start with '/'",
                        call.path
                    ));
                }
                // Every reference must already be defined.
                let mut referenced: Vec<&str> = marker_refs(&call.path);
                for (_, v) in &call.query {
                    referenced.extend(marker_refs(v));
                }
                if let Some(body) = &call.body {
                    let mut strings = Vec::new();
                    walk_strings(body, &mut strings);
                    for s in strings {
                        referenced.extend(marker_refs(s));
                    }
                }
                for marker in referenced {
                    if !defined.contains(marker) {
                        problems.push(format!(
                            "{sname} call {i}: marker __{marker}__ used before any earlier call extracts it"
                        ));
                    }
                }
                for (marker, pointer) in &call.extract {
                    let well_formed = marker_regex()
                        .find(&format!("__{marker}__"))
                        .is_some_and(|m| m.len() == marker.len() + 4);
                    if !well_formed {
                        problems.push(format!(
                            "{sname} call {i}: bad marker name {marker:?} (lowercase, digits, underscores)"
                        ));
                    }
                    if !pointer.is_empty() && !pointer.starts_with('/') {
                        problems.push(format!(
                            "{sname} call {i}: JSON pointer {pointer:?} must be empty or start with '/'"
                        ));
                    }
                    defined.insert(marker);
                }
            }
        }
        problems
    }

    /// Scenarios sorted by name — the order every run uses.
    pub fn ordered_scenarios(&self) -> Vec<&Scenario> {
        let mut scenarios: Vec<&Scenario> = self.scenarios.iter().collect();
        scenarios.sort_by(|a, b| a.name.cmp(&b.name));
        scenarios
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn call(method: &str, path: &str) -> CallSpec {
        CallSpec {
            method: method.to_string(),
            path: path.to_string(),
            query: Vec::new(),
            body: None,
            extract: BTreeMap::new(),
        }
    }

    fn suite_with(calls: Vec<CallSpec>) -> Suite {
        Suite {
            name: "t".to_string(),
            scenarios: vec![Scenario {
                name: "s".to_string(),
                category: Category::BasicCrud,
                novelty: Novelty::TraceRepresented,
                calls,
            }],
        }
    }

    #[test]
    fn valid_marker_chains_pass() {
        let mut create = call("POST", "/items");
        create.body = Some(json!({"stock": 3}));
        create.extract = BTreeMap::from([("id".to_string(), "/id".to_string())]);
        let follow = call("GET", "/items/__id__");
        assert!(suite_with(vec![create, follow]).validate().is_empty());
    }

    #[test]
    fn marker_use_before_definition_is_flagged() {
        let problems = suite_with(vec![call("GET", "/items/__id__")]).validate();
        assert_eq!(problems.len(), 1);
        assert!(problems[0].contains("__id__"), "{problems:?}");
        assert!(problems[0].contains("before"), "{problems:?}");
    }

    #[test]
    fn body_markers_are_checked_too() {
        let mut post = call("POST", "/charge");
        post.body = Some(json!({"token": "__tok__", "amount": 5}));
        let problems = suite_with(vec![post]).validate();
        assert!(problems.iter().any(|p| p.contains("__tok__")));
    }

    #[test]
    fn duplicate_names_bad_pointers_and_methods_are_flagged() {
        let mut bad_extract = call("POST", "/tokens");
        bad_extract.extract = BTreeMap::from([("tok".to_string(), "token".to_string())]);
        let mut suite = suite_with(vec![bad_extract, call("FETCH", "/x")]);
        suite.scenarios.push(suite.scenarios[0].clone());
        let problems = suite.validate();
        assert!(problems.iter().any(|p| p.contains("duplicate scenario")));
        assert!(problems.iter().any(|p| p.contains("JSON pointer")));
        assert!(problems.iter().any(|p| p.contains("FETCH")));
    }

    #[test]
    fn suite_files_round_trip() {
        let mut create = call("POST", "/items");
        create.body = Some(json!({"stock": 3}));
        create.extract = BTreeMap::from([("id".to_string(), "/id".to_string())]);
        let suite = suite_with(vec![create]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("suite.json");
        std::fs::write(&path, serde_json::to_string_pretty(&suite).unwrap()).unwrap();
        let loaded = Suite::load(&path).unwrap();
        assert_eq!(loaded, suite);
    }

    #[test]
    fn marker_scan_finds_compound_names() {
        assert_eq!(marker_refs("/orders/__ord_id__/x__b2__"), vec!["ord_id", "b2"]);
        assert!(marker_refs("/plain/path").is_empty());
        // Uppercase or dashed names are not markers.
        assert!(marker_refs("__BAD__ __a-b__").is_empty());
    }
}
