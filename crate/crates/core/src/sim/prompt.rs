//! Prompt assembly for the online simulator: which evidence the model sees,
//! under what character budgets, and how requests and scenarios are rendered.

use crate::json::truncate_chars;
use crate::trace::HttpRequestRecord;
use serde::Serialize;
use thiserror::Error;

/// Budget for a single dependency source file, in characters.
pub const DEP_SINGLE_BUDGET: usize = 8_000;
/// Budget for concatenated multi-file dependency source, in characters.
pub const DEP_MULTI_BUDGET: usize = 6_000;
/// Budget for caller source, in characters.
pub const CALLER_BUDGET: usize = 5_000;
/// Budget handed to trace summarization, in characters.
pub const TRACE_SUMMARY_BUDGET: usize = 3_000;

/// Dependency source code: one file kept whole, or several files joined
/// under `--- name ---` headers before the (tighter) multi-file budget
/// applies to the concatenation.
#[derive(Debug, Clone, PartialEq)]
pub enum DepSource {
    Single { name: String, content: String },
    Multi(Vec<(String, String)>),
}

/// The evidence bundle for a session. Only five combinations are meaningful:
/// everything (wb), caller + traces (bb), or each signal alone. Source code
/// for the dependency subsumes what traces or the caller would add, so the
/// remaining mixtures are rejected rather than silently accepted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignalConfig {
    dep_source: Option<DepSource>,
    caller_source: Option<String>,
    trace_summary: Option<String>,
}

/// Which of the five supported signal mixtures a config represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalMode {
    WhiteBox,
    BlackBox,
    DepOnly,
    CallerOnly,
    TracesOnly,
}

impl SignalMode {
    pub fn label(self) -> &'static str {
        match self {
            SignalMode::WhiteBox => "wb",
            SignalMode::BlackBox => "bb",
            SignalMode::DepOnly => "dep",
            SignalMode::CallerOnly => "caller",
            SignalMode::TracesOnly => "traces",
        }
    }

    pub fn parse(label: &str) -> Option<SignalMode> {
        match label {
            "wb" => Some(SignalMode::WhiteBox),
            "bb" => Some(SignalMode::BlackBox),
            "dep" => Some(SignalMode::DepOnly),
            "caller" => Some(SignalMode::CallerOnly),
            "traces" => Some(SignalMode::TracesOnly),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("no signals provided; supply dependency source, caller source, or traces")]
    Empty,
    #[error("unsupported signal combination {present}; use wb (dep+caller+traces), bb (caller+traces), or a single signal")]
    Unsupported { present: String },
}

impl SignalConfig {
    pub fn new(
        dep_source: Option<DepSource>,
        caller_source: Option<String>,
        trace_summary: Option<String>,
    ) -> Result<SignalConfig, SignalError> {
        let present = (
            dep_source.is_some(),
            caller_source.is_some(),
            trace_summary.is_some(),
        );
        match present {
            (false, false, false) => return Err(SignalError::Empty),
            (true, true, true)
            | (false, true, true)
            | (true, false, false)
            | (false, true, false)
            | (false, false, true) => {}
            _ => {
                let mut names = Vec::new();
                if present.0 {
                    names.push("dep");
                }
                if present.1 {
                    names.push("caller");
                }
                if present.2 {
                    names.push("traces");
                }
                return Err(SignalError::Unsupported {
                    present: names.join("+"),
                });
            }
        }
        Ok(SignalConfig {
            dep_source,
            caller_source,
            trace_summary,
        })
    }

    pub fn mode(&self) -> SignalMode {
        match (
            self.dep_source.is_some(),
            self.caller_source.is_some(),
            self.trace_summary.is_some(),
        ) {
            (true, true, true) => SignalMode::WhiteBox,
            (false, true, true) => SignalMode::BlackBox,
            (true, false, false) => SignalMode::DepOnly,
            (false, true, false) => SignalMode::CallerOnly,
            (false, false, true) => SignalMode::TracesOnly,
            // `new` admits no other combination.
            _ => unreachable!("constructor enforces supported combinations"),
        }
    }

    pub fn dep_source(&self) -> Option<&DepSource> {
        self.dep_source.as_ref()
    }
    pub fn caller_source(&self) -> Option<&str> {
        self.caller_source.as_deref()
    }
    pub fn trace_summary(&self) -> Option<&str> {
        self.trace_summary.as_deref()
    }
}

/// Builds the session's system prompt: role instructions, then each present
/// evidence section under its budget.
pub fn build_system_prompt(signals: &SignalConfig) -> String {
    let mut prompt = String::from(
        "You are standing in for an HTTP service that other services call \
         during integration tests. Answer every incoming request exactly as \
         the real service would: pick the status code, response body, and \
         headers the real implementation would produce, and carry state \
         forward across this conversation — resources that were created, \
         updated, or deleted earlier stay created, updated, or deleted, \
         identifiers you mint stay valid, and exhausted or conflicting \
         state produces the errors the real service would raise.\n\
         Reply to each request with exactly one JSON object, no prose:\n\
         {\"status\": <integer>, \"body\": <object or array>, \"headers\": {<string map>}}\n\
         Omit \"body\" for an empty response; \"headers\" may be omitted when empty.",
    );
    match signals.dep_source() {
        Some(DepSource::Single { name, content }) => {
            prompt.push_str(&format!("\n\nSource of the service you are simulating ({name}):\n"));
            prompt.push_str(truncate_chars(content, DEP_SINGLE_BUDGET));
        }
        Some(DepSource::Multi(files)) => {
            let mut joined = String::new();
            for (name, content) in files {
                joined.push_str(&format!("--- {name} ---\n"));
                joined.push_str(content);
                if !content.ends_with('\n') {
                    joined.push('\n');
                }
            }
            prompt.push_str("\n\nSource of the service you are simulating:\n");
            prompt.push_str(truncate_chars(&joined, DEP_MULTI_BUDGET));
        }
        None => {}
    }
    if let Some(caller) = signals.caller_source() {
        prompt.push_str("\n\nSource of the service that calls you (shows how you are used):\n");
        prompt.push_str(truncate_chars(caller, CALLER_BUDGET));
    }
    if let Some(summary) = signals.trace_summary() {
        prompt.push_str("\n\nTraffic previously observed against the real service:\n");
        prompt.push_str(summary);
    }
    prompt
}

#[derive(Serialize)]
struct RequestMessage<'a> {
    method: &'a str,
    path: &'a str,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    query: &'a [(String, String)],
    #[serde(skip_serializing_if = "Option::is_none")]
    body: &'a Option<serde_json::Value>,
    #[serde(skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    headers: &'a std::collections::BTreeMap<String, String>,
}

/// Renders a request as the user message the model answers.
pub fn serialize_request(req: &HttpRequestRecord) -> String {
    serde_json::to_string(&RequestMessage {
        method: &req.method,
        path: &req.path,
        query: &req.query,
        body: &req.body,
        headers: &req.headers,
    })
    .expect("request records serialize")
}

/// Renders the scenario-context message: the scenario name and the method +
/// path of each upcoming call, deliberately nothing about expected outcomes.
pub fn render_scenario(name: &str, calls: &[(String, String)]) -> String {
    let mut text = format!(
        "Scenario `{name}`: the test driver is about to issue these requests in order:\n"
    );
    for (i, (method, path)) in calls.iter().enumerate() {
        text.push_str(&format!("{}. {method} {path}\n", i + 1));
    }
    text.push_str(
        "Expected outcomes are intentionally not listed; respond to each \
         request as the real service would.",
    );
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn five_modes_are_accepted_and_labeled() {
        let dep = || {
            Some(DepSource::Single {
                name: "svc.rs".to_string(),
                content: "fn main() {}".to_string(),
            })
        };
        let caller = || Some("caller src".to_string());
        let traces = || Some("summary".to_string());
        let cases = [
            (dep(), caller(), traces(), SignalMode::WhiteBox),
            (None, caller(), traces(), SignalMode::BlackBox),
            (dep(), None, None, SignalMode::DepOnly),
            (None, caller(), None, SignalMode::CallerOnly),
            (None, None, traces(), SignalMode::TracesOnly),
        ];
        for (d, c, t, mode) in cases {
            let config = SignalConfig::new(d, c, t).unwrap();
            assert_eq!(config.mode(), mode);
            assert_eq!(SignalMode::parse(mode.label()), Some(mode));
        }
    }

    #[test]
    fn partial_dep_mixtures_are_rejected() {
        let dep = Some(DepSource::Single {
            name: "svc.rs".to_string(),
            content: "x".to_string(),
        });
        let err = SignalConfig::new(dep.clone(), Some("c".to_string()), None).unwrap_err();
        assert_eq!(
            err,
            SignalError::Unsupported {
                present: "dep+caller".to_string()
            }
        );
        let err = SignalConfig::new(dep, None, Some("t".to_string())).unwrap_err();
        assert_eq!(
            err,
            SignalError::Unsupported {
                present: "dep+traces".to_string()
            }
        );
        assert_eq!(SignalConfig::new(None, None, None).unwrap_err(), SignalError::Empty);
    }

    #[test]
    fn single_file_budget_is_8000_characters() {
        let content = "#".repeat(10_000);
        let config = SignalConfig::new(
            Some(DepSource::Single {
                name: "big.rs".to_string(),
                content,
            }),
            None,
            None,
        )
        .unwrap();
        let prompt = build_system_prompt(&config);
        let kept = prompt.chars().filter(|c| *c == '#').count();
        assert_eq!(kept, DEP_SINGLE_BUDGET);
    }

    #[test]
    fn multi_file_concatenation_is_budgeted_after_headers() {
        let files = vec![
            ("a.rs".to_string(), "a".repeat(4_000)),
            ("b.rs".to_string(), "b".repeat(4_000)),
        ];
        let config =
            SignalConfig::new(Some(DepSource::Multi(files)), None, None).unwrap();
        let prompt = build_system_prompt(&config);
        // Both headers appear (the second within the 6,000-char window), and
        // the concatenation as a whole is cut to the multi-file budget.
        assert!(prompt.contains("--- a.rs ---"));
        assert!(prompt.contains("--- b.rs ---"));
        let marker = "simulating:\n";
        let start = prompt.find(marker).unwrap() + marker.len();
        assert_eq!(prompt[start..].chars().count(), DEP_MULTI_BUDGET);
        let bs = prompt.chars().filter(|c| *c == 'b').count();
        assert!(bs < 4_000, "second file must be cut by the shared budget");
    }

    #[test]
    fn caller_budget_is_5000_characters() {
        let config = SignalConfig::new(None, Some("#".repeat(9_000)), None).unwrap();
        let prompt = build_system_prompt(&config);
        let kept = prompt.chars().filter(|c| *c == '#').count();
        assert_eq!(kept, CALLER_BUDGET);
    }

    #[test]
    fn request_serialization_omits_empty_fields() {
        let req = HttpRequestRecord::simple("GET", "/items");
        assert_eq!(serialize_request(&req), r#"{"method":"GET","path":"/items"}"#);

        let req = HttpRequestRecord::with_body("POST", "/items", json!({"stock": 5}));
        assert_eq!(
            serialize_request(&req),
            r#"{"method":"POST","path":"/items","body":{"stock":5}}"#
        );
    }

    #[test]
    fn scenario_message_lists_calls_without_outcomes() {
        let text = render_scenario(
            "reserve_confirm",
            &[
                ("GET".to_string(), "/items/item-002".to_string()),
                ("POST".to_string(), "/items/item-002/reserve".to_string()),
            ],
        );
        assert!(text.contains("`reserve_confirm`"));
        assert!(text.contains("1. GET /items/item-002"));
        assert!(text.contains("2. POST /items/item-002/reserve"));
        assert!(text.contains("intentionally not listed"));
        assert!(!text.contains("200"), "no outcomes may leak");
    }
}
