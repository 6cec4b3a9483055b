//! Model-assisted authoring of contract documents.
//!
//! A chat model is shown the document format, the expression grammar for the
//! requested version tier, and whatever evidence is available (dependency
//! source, observed-traffic summary), then asked for a complete document.
//! The reply must survive extraction, parsing, and validation; one repair
//! round quoting the concrete failure is allowed before giving up.

use crate::ir::validate::validate;
use crate::ir::{ContractIR, IrError, IrVersion};
use crate::json::{extract_single_object, truncate_chars};
use crate::sim::client::{ChatMessage, ModelClient};

/// What to generate a contract for.
#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub version: IrVersion,
    /// Service name, used only to orient the model.
    pub service: String,
    /// Dependency source code, if available (already concatenated).
    pub dep_source: Option<String>,
    /// Observed-traffic summary, if available.
    pub trace_summary: Option<String>,
}

/// A successful generation: the validated document plus the raw replies that
/// led to it (one entry per model call).
#[derive(Debug, Clone)]
pub struct GenerationOutcome {
    pub doc: ContractIR,
    pub attempts: Vec<String>,
}

const DOC_FORMAT: &str = r#"Produce a JSON document with this shape:
{
  "version": "v1" | "v2",
  "variables": [{"name": "...", "type": "int"|"number"|"string"|"bool"|"map", "initial": <json>}],
  "transitions": [
    {
      "match": {"method": "GET", "path": "/items/{id}"},
      "guard": "<s-expression or omit>",
      "effects": ["<s-expression>", ...],
      "response": {"status": 200, "body": <json template>, "headers": {}}
    }
  ],
  "default_response": {"status": 404, "body": {"error": "..."}}
}

Expressions are S-expressions over:
  literals: numbers, "strings", true, false
  variables: bare names declared under "variables"
  request access: (req body <field>), (req query <field>), (req path <param>), (req header <name>)
  comparisons: (= a b) (!= a b) (< a b) (<= a b) (> a b) (>= a b)
  boolean: (and ...) (or ...) (not x)
  effects: (assign var expr)"#;

const V2_EXTRAS: &str = r#"  arithmetic: (+ a b) (- a b) (* a b) (/ a b)
  maps: (has m key) (get m key), effects (map_put m key value) (map_delete m key)
  fresh ids: (mint_id "prefix") in effect/template position

Response bodies may embed "${expr}" fragments; a string that is exactly one
fragment is replaced by the expression's typed value, otherwise fragments are
spliced in as text. Status may be an expression string instead of an integer."#;

const V1_LIMITS: &str = r#"This document must be version "v1": only comparisons, boolean operators, and
(assign var expr) with literal or request-derived scalar values. No arithmetic,
no map variables or map operations, no mint_id. Response bodies may embed
"${expr}" fragments referencing variables or request fields."#;

fn system_prompt(req: &GenerationRequest) -> String {
    let mut prompt = format!(
        "You write behavioral contracts for HTTP services. Model the `{}` \
         service as a guarded transition system: request matching, guards over \
         typed state variables, effects that update them, and templated \
         responses. Transitions are tried in order; the first whose method, \
         path, and guard all match fires.\n\n{DOC_FORMAT}\n\n{}",
        req.service,
        match req.version {
            IrVersion::V1 => V1_LIMITS,
            IrVersion::V2 => V2_EXTRAS,
        }
    );
    if let Some(src) = &req.dep_source {
        prompt.push_str("\n\nService source:\n");
        prompt.push_str(truncate_chars(src, 8_000));
    }
    if let Some(summary) = &req.trace_summary {
        prompt.push_str("\n\nObserved traffic:\n");
        prompt.push_str(summary);
    }
    prompt.push_str("\n\nReply with exactly one JSON document and no other text.");
    prompt
}

fn try_parse(text: &str, version: IrVersion) -> Result<ContractIR, String> {
    let value = extract_single_object(text).map_err(|e| e.to_string())?;
    let doc = ContractIR::from_json(value).map_err(|e| e.to_string())?;
    if doc.version != version {
        return Err(format!(
            "document declares version {} but {version} was requested",
            doc.version
        ));
    }
    let diagnostics = validate(&doc);
    if diagnostics.is_empty() {
        Ok(doc)
    } else {
        Err(diagnostics
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; "))
    }
}

/// Asks the model for a contract document, allowing one repair round. Both
/// raw replies are preserved in the outcome (and in the error on failure) so
/// callers can inspect what the model actually said.
pub async fn generate(
    client: &dyn ModelClient,
    req: &GenerationRequest,
) -> Result<GenerationOutcome, IrError> {
    let mut messages = vec![
        ChatMessage::system(system_prompt(req)),
        ChatMessage::user(format!(
            "Write the {} contract document for the `{}` service.",
            req.version, req.service
        )),
    ];
    let first = client
        .chat(&messages)
        .await
        .map_err(|e| IrError::Model(e.to_string()))?;

    let first_failure = match try_parse(&first.text, req.version) {
        Ok(doc) => {
            return Ok(GenerationOutcome {
                doc,
                attempts: vec![first.text],
            })
        }
        Err(why) => why,
    };

    messages.push(ChatMessage::assistant(first.text.clone()));
    messages.push(ChatMessage::user(format!(
        "That document was rejected: {first_failure}. Fix these problems and \
         reply with the complete corrected JSON document and no other text."
    )));
    let second = client
        .chat(&messages)
        .await
        .map_err(|e| IrError::Model(e.to_string()))?;

    match try_parse(&second.text, req.version) {
        Ok(doc) => Ok(GenerationOutcome {
            doc,
            attempts: vec![first.text, second.text],
        }),
        Err(second_failure) => Err(IrError::Generation {
            attempts: vec![first.text, second.text],
            message: second_failure,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::client::{Script, ScriptReply, ScriptedClient};
    use serde_json::json;

    fn valid_doc() -> serde_json::Value {
        json!({
            "version": "v1",
            "variables": [{"name": "hits", "type": "int", "initial": 0}],
            "transitions": [{
                "match": {"method": "GET", "path": "/ping"},
                "effects": ["(assign hits 1)"],
                "response": {"status": 200, "body": {"pong": true}}
            }],
            "default_response": {"status": 404, "body": {"error": "no route"}}
        })
    }

    fn req() -> GenerationRequest {
        GenerationRequest {
            version: IrVersion::V1,
            service: "ping".to_string(),
            dep_source: None,
            trace_summary: None,
        }
    }

    #[tokio::test]
    async fn accepts_a_valid_first_reply() {
        let client = ScriptedClient::new(Script {
            replies: vec![ScriptReply::Json(valid_doc())],
            ..Script::default()
        })
        .unwrap();
        let outcome = generate(&client, &req()).await.unwrap();
        assert_eq!(outcome.attempts.len(), 1);
        assert_eq!(outcome.doc.transitions.len(), 1);
        assert_eq!(client.calls(), 1);
    }

    #[tokio::test]
    async fn repairs_once_quoting_the_diagnostics() {
        // First reply sneaks arithmetic into a v1 document; the repair
        // message must quote the validator's complaint.
        let mut bad = valid_doc();
        bad["transitions"][0]["effects"] = json!(["(assign hits (+ hits 1))"]);
        let client = ScriptedClient::new(Script {
            replies: vec![ScriptReply::Json(bad), ScriptReply::Json(valid_doc())],
            ..Script::default()
        })
        .unwrap();

        let outcome = generate(&client, &req()).await.unwrap();
        assert_eq!(outcome.attempts.len(), 2);
        assert_eq!(client.calls(), 2);
        let correction = client.last_messages().last().unwrap().content.clone();
        assert!(correction.contains("rejected"));
        assert!(correction.contains("arithmetic"), "got: {correction}");
    }

    #[tokio::test]
    async fn gives_up_after_two_bad_replies_keeping_both() {
        let client = ScriptedClient::new(Script {
            replies: vec![
                ScriptReply::Text("I cannot do that.".to_string()),
                ScriptReply::Text("Still prose, sorry.".to_string()),
            ],
            ..Script::default()
        })
        .unwrap();
        match generate(&client, &req()).await {
            Err(IrError::Generation { attempts, .. }) => {
                assert_eq!(attempts.len(), 2);
                assert!(attempts[0].contains("cannot"));
                assert!(attempts[1].contains("Still prose"));
            }
            other => panic!("expected generation failure, got {other:?}"),
        }
    }

    #[tokio::test]
    async fn rejects_version_mismatch() {
        let mut wrong = valid_doc();
        wrong["version"] = json!("v2");
        let client = ScriptedClient::new(Script {
            replies: vec![ScriptReply::Json(wrong.clone()), ScriptReply::Json(wrong)],
            ..Script::default()
        })
        .unwrap();
        assert!(matches!(
            generate(&client, &req()).await,
            Err(IrError::Generation { .. })
        ));
    }
}
