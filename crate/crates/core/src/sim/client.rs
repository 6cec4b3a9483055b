//! Model clients: the chat abstraction the online simulator talks to, a
//! deterministic scripted implementation for offline runs and tests, and a
//! remote HTTP client for real model endpoints.

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;
use std::sync::Mutex;
use thiserror::Error;

/// Message role in a chat conversation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One chat message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// A model's reply plus its token accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Why a chat call failed.
#[derive(Debug, Error)]
pub enum ModelError {
    /// The endpoint could not be reached or answered outside its protocol.
    #[error("model transport: {0}")]
    Transport(String),
    /// The reply arrived but was not usable (wrong shape, script exhausted).
    #[error("model protocol: {0}")]
    Protocol(String),
}

/// Sampling settings sent with each remote chat call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Sampling {
        Sampling {
            temperature: 0.1,
            max_tokens: 2_048,
        }
    }
}

/// Anything that can answer a chat conversation.
#[async_trait]
pub trait ModelClient: Send + Sync {
    async fn chat(&self, messages: &[ChatMessage]) -> Result<ChatReply, ModelError>;
}

// ============================================================================
// Scripted client
// ============================================================================

/// One scripted reply: a raw string is used verbatim (allowing deliberately
/// malformed output); any other JSON value is serialized compactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptReply {
    Text(String),
    Json(Value),
}

impl ScriptReply {
    fn render(&self) -> String {
        match self {
            ScriptReply::Text(s) => s.clone(),
            ScriptReply::Json(v) => crate::json::canonical(v),
        }
    }
}

/// Matching condition for a script rule. All present fields must match the
/// final user message of the conversation; that message is parsed as the
/// serialized request JSON for `method` and `path`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleMatch {
    /// Exact HTTP method from the request message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    /// Regex applied to the request path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// Substring that must appear anywhere in the raw message text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
}

/// What happens when a rule runs out of replies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Advance {
    /// Keep answering with the final reply.
    #[default]
    Stick,
    /// Fail the call once the replies are consumed.
    Strict,
}

/// One scripted rule: a matcher plus an ordered reply queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, rename = "match")]
    pub matcher: RuleMatch,
    pub replies: Vec<ScriptReply>,
    #[serde(default)]
    pub advance: Advance,
}

/// On-disk script: either a flat ordered reply list, or matcher rules with
/// an optional fallback reply.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replies: Vec<ScriptReply>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<ScriptRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<ScriptReply>,
}

struct CompiledRule {
    matcher: RuleMatch,
    path_regex: Option<regex::Regex>,
    replies: Vec<ScriptReply>,
    advance: Advance,
    cursor: Mutex<usize>,
}

/// Deterministic [`ModelClient`] that answers from a [`Script`]. Token
/// counts are estimated as character count divided by four, so runs with
/// identical inputs report identical usage.
pub struct ScriptedClient {
    ordered: Vec<ScriptReply>,
    ordered_cursor: Mutex<usize>,
    rules: Vec<CompiledRule>,
    default: Option<ScriptReply>,
    calls: Mutex<u64>,
    last_messages: Mutex<Vec<ChatMessage>>,
}

impl ScriptedClient {
    pub fn new(script: Script) -> Result<ScriptedClient, ModelError> {
        let rules = script
            .rules
            .into_iter()
            .map(|r| {
                let path_regex = r
                    .matcher
                    .path
                    .as_deref()
                    .map(regex::Regex::new)
                    .transpose()
                    .map_err(|e| ModelError::Protocol(format!("bad path regex: {e}")))?;
                Ok(CompiledRule {
                    matcher: r.matcher,
                    path_regex,
                    replies: r.replies,
                    advance: r.advance,
                    cursor: Mutex::new(0),
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(ScriptedClient {
            ordered: script.replies,
            ordered_cursor: Mutex::new(0),
            rules,
            default: script.default,
            calls: Mutex::new(0),
            last_messages: Mutex::new(Vec::new()),
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<ScriptedClient, ModelError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ModelError::Protocol(format!("{}: {e}", path.as_ref().display())))?;
        let script: Script = serde_json::from_str(&text)
            .map_err(|e| ModelError::Protocol(format!("script parse: {e}")))?;
        ScriptedClient::new(script)
    }

    /// Convenience: a client that always answers with one fixed reply.
    pub fn always(reply: Value) -> ScriptedClient {
        ScriptedClient::new(Script {
            default: Some(ScriptReply::Json(reply)),
            ..Script::default()
        })
        .expect("no regexes to compile")
    }

    /// Builds a FIFO script out of recorded traffic: one rule per
    /// `(method, path)` in first-appearance order, replying with each
    /// recorded response in capture order and sticking on the last.
    ///
    /// Replaying a request sequence identical to the capture makes the
    /// scripted model reproduce the recorded dependency exactly.
    pub fn fifo_from_traces(store: &crate::trace::TraceStore) -> ScriptedClient {
        let mut order: Vec<(String, String)> = Vec::new();
        let mut queues: std::collections::BTreeMap<(String, String), Vec<ScriptReply>> =
            std::collections::BTreeMap::new();
        for inter in store.interactions() {
            let key = (inter.request.method.clone(), inter.request.path.clone());
            if !queues.contains_key(&key) {
                order.push(key.clone());
            }
            let mut reply = serde_json::Map::new();
            reply.insert("status".into(), Value::from(inter.response.status));
            if let Some(body) = &inter.response.body {
                reply.insert("body".into(), body.clone());
            }
            queues
                .entry(key)
                .or_default()
                .push(ScriptReply::Json(Value::Object(reply)));
        }
        let rules = order
            .into_iter()
            .map(|(method, path)| ScriptRule {
                matcher: RuleMatch {
                    method: Some(method.clone()),
                    path: Some(format!("^{}$", regex::escape(&path))),
                    contains: None,
                },
                replies: queues.remove(&(method, path)).expect("queued"),
                advance: Advance::Stick,
            })
            .collect();
        ScriptedClient::new(Script {
            rules,
            ..Script::default()
        })
        .expect("escaped regexes compile")
    }

    /// Number of chat calls served so far.
    pub fn calls(&self) -> u64 {
        *self.calls.lock().expect("not poisoned")
    }

    /// The messages from the most recent chat call.
    pub fn last_messages(&self) -> Vec<ChatMessage> {
        self.last_messages.lock().expect("not poisoned").clone()
    }

    fn rule_reply(&self, messages: &[ChatMessage]) -> Result<Option<String>, ModelError> {
        let last_user = messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        let parsed: Option<Value> = serde_json::from_str(last_user).ok();
        let method = parsed
            .as_ref()
            .and_then(|v| v.get("method"))
            .and_then(Value::as_str)
            .unwrap_or_default();
        let path = parsed
            .as_ref()
            .and_then(|v| v.get("path"))
            .and_then(Value::as_str)
            .unwrap_or_default();

        for rule in &self.rules {
            if let Some(m) = &rule.matcher.method {
                if m != method {
                    continue;
                }
            }
            if let Some(re) = &rule.path_regex {
                if !re.is_match(path) {
                    continue;
                }
            }
            if let Some(needle) = &rule.matcher.contains {
                if !last_user.contains(needle.as_str()) {
                    continue;
                }
            }
            let mut cursor = rule.cursor.lock().expect("not poisoned");
            let idx = (*cursor).min(rule.replies.len().saturating_sub(1));
            if *cursor >= rule.replies.len() && rule.advance == Advance::Strict {
                return Err(ModelError::Protocol(format!(
                    "script rule for {method} {path} exhausted after {} replies",
                    rule.replies.len()
                )));
            }
            *cursor += 1;
            return Ok(rule.replies.get(idx).map(ScriptReply::render));
        }
        Ok(None)
    }
}

#[async_trait]
impl ModelClient for ScriptedClient {
    async fn chat(&self, messages: &[ChatMessage]) -> Result<ChatReply, ModelError> {
        *self.calls.lock().expect("not poisoned") += 1;
        *self.last_messages.lock().expect("not poisoned") = messages.to_vec();

        let text = if !self.ordered.is_empty() {
            let mut cursor = self.ordered_cursor.lock().expect("not poisoned");
            let idx = (*cursor).min(self.ordered.len() - 1);
            *cursor += 1;
            self.ordered[idx].render()
        } else if let Some(text) = self.rule_reply(messages)? {
            text
        } else if let Some(default) = &self.default {
            default.render()
        } else {
            return Err(ModelError::Protocol("no script rule matched".to_string()));
        };

        let input_chars: usize = messages.iter().map(|m| m.content.chars().count()).sum();
        Ok(ChatReply {
            input_tokens: (input_chars / 4) as u64,
            output_tokens: (text.chars().count() / 4) as u64,
            text,
        })
    }
}

// ============================================================================
// Remote client
// ============================================================================

/// Chat client for an OpenAI-style `chat/completions` endpoint.
pub struct RemoteClient {
    http: reqwest::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    sampling: Sampling,
}

impl RemoteClient {
    /// `endpoint` is the full URL of the completions route. The API key is
    /// read from the named environment variable at construction; a missing
    /// variable simply sends unauthenticated requests.
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key_env: Option<&str>,
        sampling: Sampling,
    ) -> RemoteClient {
        RemoteClient {
            http: reqwest::Client::new(),
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: api_key_env.and_then(|name| std::env::var(name).ok()),
            sampling,
        }
    }
}

#[async_trait]
impl ModelClient for RemoteClient {
    async fn chat(&self, messages: &[ChatMessage]) -> Result<ChatReply, ModelError> {
        let payload = serde_json::json!({
            "model": self.model,
            "messages": messages,
            "temperature": self.sampling.temperature,
            "max_tokens": self.sampling.max_tokens,
        });
        let mut request = self.http.post(&self.endpoint).json(&payload);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .await
            .map_err(|e| ModelError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().await.unwrap_or_default();
            return Err(ModelError::Transport(format!(
                "endpoint returned {status}: {body}"
            )));
        }
        let value: Value = response
            .json()
            .await
            .map_err(|e| ModelError::Protocol(e.to_string()))?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| {
                ModelError::Protocol("reply missing choices[0].message.content".to_string())
            })?
            .to_string();
        let usage = &value["usage"];
        Ok(ChatReply {
            input_tokens: usage["prompt_tokens"].as_u64().unwrap_or(0),
            output_tokens: usage["completion_tokens"].as_u64().unwrap_or(0),
            text,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn msg(path: &str) -> Vec<ChatMessage> {
        vec![ChatMessage::user(
            json!({"method": "GET", "path": path}).to_string(),
        )]
    }

    #[tokio::test]
    async fn ordered_scripts_advance_and_stick() {
        let client = ScriptedClient::new(Script {
            replies: vec![
                ScriptReply::Json(json!({"status": 200, "body": {"n": 1}})),
                ScriptReply::Text("prose".to_string()),
            ],
            ..Script::default()
        })
        .unwrap();
        assert!(client.chat(&msg("/a")).await.unwrap().text.contains("\"n\":1"));
        assert_eq!(client.chat(&msg("/a")).await.unwrap().text, "prose");
        // Exhausted ordered scripts stick on the final reply.
        assert_eq!(client.chat(&msg("/a")).await.unwrap().text, "prose");
        assert_eq!(client.calls(), 3);
    }

    #[tokio::test]
    async fn rules_match_method_path_and_contains() {
        let client = ScriptedClient::new(Script {
            rules: vec![
                ScriptRule {
                    matcher: RuleMatch {
                        method: Some("GET".to_string()),
                        path: Some("^/items$".to_string()),
                        contains: None,
                    },
                    replies: vec![ScriptReply::Json(json!({"status": 200, "body": []}))],
                    advance: Advance::Stick,
                },
                ScriptRule {
                    matcher: RuleMatch {
                        contains: Some("quantity".to_string()),
                        ..RuleMatch::default()
                    },
                    replies: vec![ScriptReply::Json(
                        json!({"status": 201, "body": {"reservation_id": "rsv-1"}}),
                    )],
                    advance: Advance::Stick,
                },
            ],
            default: Some(ScriptReply::Json(json!({"status": 404, "body": {"error": "x"}}))),
            ..Script::default()
        })
        .unwrap();

        let r = client.chat(&msg("/items")).await.unwrap();
        assert!(r.text.contains("\"status\":200"));

        let reserve = vec![ChatMessage::user(
            json!({"method": "POST", "path": "/items/item-1/reserve", "body": {"quantity": 2}})
                .to_string(),
        )];
        let r = client.chat(&reserve).await.unwrap();
        assert!(r.text.contains("rsv-1"));

        let r = client.chat(&msg("/elsewhere")).await.unwrap();
        assert!(r.text.contains("404"));
    }

    #[tokio::test]
    async fn strict_rules_error_when_exhausted() {
        let client = ScriptedClient::new(Script {
            rules: vec![ScriptRule {
                matcher: RuleMatch::default(),
                replies: vec![ScriptReply::Json(json!({"status": 200, "body": {}}))],
                advance: Advance::Strict,
            }],
            ..Script::default()
        })
        .unwrap();
        assert!(client.chat(&msg("/a")).await.is_ok());
        assert!(matches!(
            client.chat(&msg("/a")).await,
            Err(ModelError::Protocol(_))
        ));
    }

    #[tokio::test]
    async fn fifo_from_traces_replays_in_capture_order() {
        use crate::trace::*;
        let store = TraceStore::from_interactions(
            vec![
                Interaction {
                    request: HttpRequestRecord::simple("POST", "/tokens"),
                    response: HttpResponseRecord::new(
                        201,
                        Some(json!({"token": "tok-1", "expires_in": 300})),
                    ),
                    service: "payment".into(),
                    timestamp: 1,
                    session: None,
                },
                Interaction {
                    request: HttpRequestRecord::simple("POST", "/tokens"),
                    response: HttpResponseRecord::new(
                        201,
                        Some(json!({"token": "tok-2", "expires_in": 300})),
                    ),
                    service: "payment".into(),
                    timestamp: 2,
                    session: None,
                },
            ],
            PathNormalizer::default(),
        );
        let client = ScriptedClient::fifo_from_traces(&store);
        let call = vec![ChatMessage::user(
            json!({"method": "POST", "path": "/tokens"}).to_string(),
        )];
        assert!(client.chat(&call).await.unwrap().text.contains("tok-1"));
        assert!(client.chat(&call).await.unwrap().text.contains("tok-2"));
        // Sticks on the last recorded response thereafter.
        assert!(client.chat(&call).await.unwrap().text.contains("tok-2"));
    }

    #[tokio::test]
    async fn token_counts_are_deterministic_character_estimates() {
        let client = ScriptedClient::always(json!({"status": 204}));
        let a = client.chat(&msg("/a")).await.unwrap();
        let b = client.chat(&msg("/a")).await.unwrap();
        assert_eq!(a.input_tokens, b.input_tokens);
        assert_eq!(a.output_tokens, b.output_tokens);
        assert_eq!(a.input_tokens, (msg("/a")[0].content.chars().count() / 4) as u64);
    }
}
