//! Online simulation: a chat model answers HTTP requests in place of a real
//! dependency, holding simulated state in its conversation history.
//!
//! The session keeps a bounded transcript (the last [`MAX_EXCHANGES`]
//! request/reply exchanges), injects an optional scenario-context message,
//! repairs malformed replies once, and accounts tokens and latency per call.

pub mod client;
pub mod prompt;

use crate::json::truncate_chars;
use crate::response::{parse_reply, MockResponse};
use crate::trace::HttpRequestRecord;
use client::{ChatMessage, ModelClient};
use prompt::{build_system_prompt, render_scenario, serialize_request, SignalConfig};
use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

/// Most request/reply exchanges retained in conversation state. With the
/// system prompt and a scenario message this caps a prompt at 42 messages.
pub const MAX_EXCHANGES: usize = 20;

/// Token totals for one scenario (reset archives into a new bucket).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UsageTotals {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl UsageTotals {
    fn add(&mut self, reply: &client::ChatReply) {
        self.calls += 1;
        self.input_tokens += reply.input_tokens;
        self.output_tokens += reply.output_tokens;
    }
}

/// Metrics for the most recent request (repair rounds included).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallStats {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: f64,
}

/// One model-backed mock session.
pub struct SimSession {
    client: Arc<dyn ModelClient>,
    system_prompt: String,
    scenario: Option<String>,
    history: VecDeque<(String, String)>,
    usage: UsageTotals,
    archived: Vec<UsageTotals>,
    last_call: Option<CallStats>,
}

impl SimSession {
    pub fn new(client: Arc<dyn ModelClient>, signals: &SignalConfig) -> SimSession {
        SimSession {
            client,
            system_prompt: build_system_prompt(signals),
            scenario: None,
            history: VecDeque::new(),
            usage: UsageTotals::default(),
            archived: Vec::new(),
            last_call: None,
        }
    }

    /// Installs the scenario-context message for upcoming calls.
    pub fn set_scenario(&mut self, name: &str, calls: &[(String, String)]) {
        self.scenario = Some(render_scenario(name, calls));
    }

    /// Clears conversation state: history and scenario go, and the usage
    /// counters are archived into a fresh bucket.
    pub fn reset(&mut self) {
        self.history.clear();
        self.scenario = None;
        self.archived.push(std::mem::take(&mut self.usage));
        self.last_call = None;
    }

    pub fn history_exchanges(&self) -> usize {
        self.history.len()
    }

    pub fn system_prompt(&self) -> &str {
        &self.system_prompt
    }

    pub fn last_call(&self) -> Option<CallStats> {
        self.last_call
    }

    pub fn usage(&self) -> UsageTotals {
        self.usage
    }

    /// Usage across the whole session: archived buckets plus the current one.
    pub fn total_usage(&self) -> UsageTotals {
        let mut total = self.usage;
        for bucket in &self.archived {
            total.calls += bucket.calls;
            total.input_tokens += bucket.input_tokens;
            total.output_tokens += bucket.output_tokens;
        }
        total
    }

    /// System prompt, optional scenario message, the most recent complete
    /// exchanges, and the new user message. Keeping one exchange of headroom
    /// under [`MAX_EXCHANGES`] bounds the assembled prompt at 42 messages.
    fn assemble(&self, user_msg: &str) -> Vec<ChatMessage> {
        let mut messages = Vec::with_capacity(2 + 2 * self.history.len() + 1);
        messages.push(ChatMessage::system(self.system_prompt.clone()));
        if let Some(scenario) = &self.scenario {
            messages.push(ChatMessage::user(scenario.clone()));
        }
        let skip = self.history.len().saturating_sub(MAX_EXCHANGES - 1);
        for (user, assistant) in self.history.iter().skip(skip) {
            messages.push(ChatMessage::user(user.clone()));
            messages.push(ChatMessage::assistant(assistant.clone()));
        }
        messages.push(ChatMessage::user(user_msg.to_string()));
        messages
    }

    fn push_exchange(&mut self, user: String, assistant: String) {
        self.history.push_back((user, assistant));
        while self.history.len() > MAX_EXCHANGES {
            self.history.pop_front();
        }
    }

    /// Answers one request. A transport failure at any point leaves the
    /// conversation unchanged and reports 502; a reply that cannot be parsed
    /// gets one correction round, after which both exchanges are kept (the
    /// model must see its own failures) and the session reports 500.
    pub async fn handle_request(&mut self, req: &HttpRequestRecord) -> MockResponse {
        let started = Instant::now();
        let user_msg = serialize_request(req);
        let mut messages = self.assemble(&user_msg);
        let mut stats = CallStats {
            input_tokens: 0,
            output_tokens: 0,
            latency_ms: 0.0,
        };

        let first = match self.client.chat(&messages).await {
            Ok(reply) => reply,
            Err(_) => return self.unreachable(started),
        };
        stats.input_tokens += first.input_tokens;
        stats.output_tokens += first.output_tokens;
        self.usage.add(&first);

        let first_error = match parse_reply(&first.text) {
            Ok(mock) => {
                self.push_exchange(user_msg, first.text);
                return self.finish(stats, started, mock);
            }
            Err(e) => e,
        };

        let correction = format!(
            "Your previous reply could not be used: {first_error}. Reply with \
             exactly one JSON object shaped like {{\"status\": <integer 100-599>, \
             \"body\": <object or array, omitted when empty>, \"headers\": \
             {{<string map, optional>}}}} and no other text."
        );
        messages.push(ChatMessage::assistant(first.text.clone()));
        messages.push(ChatMessage::user(correction.clone()));

        let second = match self.client.chat(&messages).await {
            Ok(reply) => reply,
            Err(_) => return self.unreachable(started),
        };
        stats.input_tokens += second.input_tokens;
        stats.output_tokens += second.output_tokens;
        self.usage.add(&second);

        let outcome = match parse_reply(&second.text) {
            Ok(mock) => mock,
            Err(_) => MockResponse::error(500, "simulator parse failure"),
        };
        self.push_exchange(user_msg, first.text);
        self.push_exchange(correction, second.text);
        self.finish(stats, started, outcome)
    }

    fn finish(&mut self, mut stats: CallStats, started: Instant, mock: MockResponse) -> MockResponse {
        stats.latency_ms = started.elapsed().as_secs_f64() * 1_000.0;
        self.last_call = Some(stats);
        mock
    }

    fn unreachable(&mut self, started: Instant) -> MockResponse {
        self.last_call = Some(CallStats {
            input_tokens: 0,
            output_tokens: 0,
            latency_ms: started.elapsed().as_secs_f64() * 1_000.0,
        });
        MockResponse::error(502, "model unreachable")
    }

    /// Debug view of the conversation (used by the host's transcript dump).
    pub fn transcript(&self, budget: usize) -> String {
        let mut text = String::new();
        for (user, assistant) in &self.history {
            text.push_str(">> ");
            text.push_str(user);
            text.push_str("\n<< ");
            text.push_str(assistant);
            text.push('\n');
        }
        truncate_chars(&text, budget).to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use client::{Script, ScriptReply, ScriptedClient};
    use prompt::DepSource;
    use serde_json::json;

    fn signals() -> SignalConfig {
        SignalConfig::new(
            Some(DepSource::Single {
                name: "svc.rs".to_string(),
                content: "// service".to_string(),
            }),
            None,
            None,
        )
        .unwrap()
    }

    fn get(path: &str) -> HttpRequestRecord {
        HttpRequestRecord::simple("GET", path)
    }

    #[tokio::test]
    async fn answers_and_grows_history_by_one_exchange() {
        let client = Arc::new(ScriptedClient::always(json!({"status": 200, "body": {"ok": true}})));
        let mut session = SimSession::new(client.clone(), &signals());
        let res = session.handle_request(&get("/items")).await;
        assert_eq!(res.status, 200);
        assert_eq!(res.body, Some(json!({"ok": true})));
        assert_eq!(session.history_exchanges(), 1);
        assert_eq!(session.usage().calls, 1);
        assert!(session.last_call().unwrap().output_tokens > 0);
    }

    #[tokio::test]
    async fn history_is_bounded_and_prompts_stay_within_42_messages() {
        let client = Arc::new(ScriptedClient::always(json!({"status": 204})));
        let mut session = SimSession::new(client.clone(), &signals());
        session.set_scenario("long_run", &[("GET".to_string(), "/items".to_string())]);
        for i in 0..60 {
            session.handle_request(&get(&format!("/items/item-{i:03}"))).await;
        }
        assert_eq!(session.history_exchanges(), MAX_EXCHANGES);
        let sent = client.last_messages();
        assert!(sent.len() <= 42, "prompt had {} messages", sent.len());
        // Oldest exchanges fall away: request 0 is gone, recent ones remain.
        let joined: String = sent.iter().map(|m| m.content.as_str()).collect();
        assert!(!joined.contains("item-000"));
        assert!(joined.contains("item-059"));
    }

    #[tokio::test]
    async fn malformed_reply_is_repaired_once() {
        let client = Arc::new(
            ScriptedClient::new(Script {
                replies: vec![
                    ScriptReply::Text("Sure! The service would answer 200.".to_string()),
                    ScriptReply::Json(json!({"status": 200, "body": {"fixed": true}})),
                ],
                ..Script::default()
            })
            .unwrap(),
        );
        let mut session = SimSession::new(client.clone(), &signals());
        let res = session.handle_request(&get("/items")).await;
        assert_eq!(res.status, 200);
        assert_eq!(res.body, Some(json!({"fixed": true})));
        assert_eq!(client.calls(), 2);
        // The correction round is preserved as a second exchange.
        assert_eq!(session.history_exchanges(), 2);
        let sent = client.last_messages();
        let correction = &sent.last().unwrap().content;
        assert!(correction.contains("could not be used"));
        let stats = session.last_call().unwrap();
        assert_eq!(session.usage().calls, 2);
        assert!(stats.output_tokens > 0);
    }

    #[tokio::test]
    async fn two_malformed_replies_become_a_500() {
        let client = Arc::new(
            ScriptedClient::new(Script {
                replies: vec![
                    ScriptReply::Text("prose".to_string()),
                    ScriptReply::Text("more prose".to_string()),
                ],
                ..Script::default()
            })
            .unwrap(),
        );
        let mut session = SimSession::new(client, &signals());
        let res = session.handle_request(&get("/items")).await;
        assert_eq!(res.status, 500);
        assert_eq!(res.body, Some(json!({"error": "simulator parse failure"})));
        assert_eq!(session.history_exchanges(), 2);
    }

    #[tokio::test]
    async fn scripted_rule_exhaustion_maps_to_502_and_leaves_state_alone() {
        let client = Arc::new(
            ScriptedClient::new(Script {
                rules: vec![],
                ..Script::default()
            })
            .unwrap(),
        );
        let mut session = SimSession::new(client, &signals());
        let res = session.handle_request(&get("/items")).await;
        assert_eq!(res.status, 502);
        assert_eq!(res.body, Some(json!({"error": "model unreachable"})));
        assert_eq!(session.history_exchanges(), 0);
        assert_eq!(session.usage().calls, 0);
    }

    #[tokio::test]
    async fn reset_clears_history_and_scenario_and_archives_usage() {
        let client = Arc::new(ScriptedClient::always(json!({"status": 200, "body": {}})));
        let mut session = SimSession::new(client.clone(), &signals());
        session.set_scenario("one", &[("GET".to_string(), "/items".to_string())]);
        session.handle_request(&get("/items")).await;
        let before = session.usage();
        session.reset();
        assert_eq!(session.history_exchanges(), 0);
        assert_eq!(session.usage(), UsageTotals::default());
        assert_eq!(session.total_usage(), before);
        // After reset the prompt carries no trace of the old scenario.
        session.handle_request(&get("/other")).await;
        let joined: String = client
            .last_messages()
            .iter()
            .map(|m| m.content.as_str())
            .collect();
        assert!(!joined.contains("Scenario `one`"));
        assert!(!joined.contains("/items\""));
    }

    #[tokio::test]
    async fn reset_reproduces_identical_responses_for_identical_requests() {
        // The script carries the reply sequence twice over: the client-side
        // cursor keeps advancing across the reset, and determinism must come
        // from the session state alone.
        let run = vec![
            ScriptReply::Json(json!({"status": 201, "body": {"id": "gen-1"}})),
            ScriptReply::Json(json!({"status": 200, "body": {"id": "gen-1", "stock": 5}})),
        ];
        let mut replies = run.clone();
        replies.extend(run);
        let client = Arc::new(
            ScriptedClient::new(Script {
                replies,
                ..Script::default()
            })
            .unwrap(),
        );
        let mut session = SimSession::new(client, &signals());

        let mut first = Vec::new();
        for req in [
            HttpRequestRecord::with_body("POST", "/items", json!({"stock": 5})),
            get("/items/gen-1"),
        ] {
            first.push(serde_json::to_string(&session.handle_request(&req).await).unwrap());
        }
        session.reset();
        let mut second = Vec::new();
        for req in [
            HttpRequestRecord::with_body("POST", "/items", json!({"stock": 5})),
            get("/items/gen-1"),
        ] {
            second.push(serde_json::to_string(&session.handle_request(&req).await).unwrap());
        }
        assert_eq!(first, second);
    }

    #[tokio::test]
    async fn scenario_context_is_sent_before_the_first_request() {
        let client = Arc::new(ScriptedClient::always(json!({"status": 200, "body": []})));
        let mut session = SimSession::new(client.clone(), &signals());
        session.set_scenario(
            "listing",
            &[("GET".to_string(), "/items".to_string())],
        );
        session.handle_request(&get("/items")).await;
        let sent = client.last_messages();
        assert_eq!(sent[0].role, client::Role::System);
        assert!(sent[1].content.contains("Scenario `listing`"));
        assert!(sent[1].content.contains("1. GET /items"));
    }
}
