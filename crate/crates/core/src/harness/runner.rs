//! Scenario execution: the five-step comparison protocol.
//!
//! For each scenario, in suite order (scenarios sorted by name):
//!
//! 1. reset the live side (`POST /__admin__/reset`)
//! 2. run the calls against the live side, chasing its extractions
//! 3. reset the simulated side (`POST /__mock__/reset`)
//! 4. inject scenario context (`POST /__mock__/scenario` — names the calls,
//!    never their outcomes; skippable for ablations)
//! 5. run the same calls against the simulated side with its *own*
//!    extractions, then score the two transcripts
//!
//! Only network-level failures (connection refused, timeouts) mark a
//! scenario as an infrastructure failure; those are excluded from fidelity
//! denominators. Everything a server *answers* — including 5xx — counts as
//! behavior.

use super::{marker_regex, Category, Novelty, Scenario, Suite};
use crate::json::compare_body_shape;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::time::Instant;

/// What one side answered for one call.
#[derive(Debug, Clone, PartialEq)]
pub struct SideObservation {
    /// Path after marker substitution — the one actually requested.
    pub path: String,
    pub status: u16,
    pub body: Option<Value>,
    /// Cost headers, present when the side is an online simulator.
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
    pub latency_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallOutcome {
    pub method: String,
    pub live: SideObservation,
    pub sim: SideObservation,
    pub status_match: bool,
    pub shape_match: bool,
}

/// A control-endpoint call made while driving a scenario (resets and
/// scenario-context injection). Kept so the transcript shows the full
/// conversation with each side, not only the scored calls.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlRecord {
    /// "live" or "sim".
    pub side: &'static str,
    pub path: &'static str,
    pub status: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub name: String,
    pub category: Category,
    pub novelty: Novelty,
    /// Why the scenario could not be evaluated, when it could not.
    pub infra: Option<String>,
    pub status_pass: bool,
    pub body_pass: bool,
    pub controls: Vec<ControlRecord>,
    pub calls: Vec<CallOutcome>,
}

/// A full suite run, ready for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRun {
    pub suite: String,
    pub outcomes: Vec<ScenarioOutcome>,
    pub model: Option<String>,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub wall_ms: f64,
    pub started_epoch_s: u64,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub live_base: String,
    pub sim_base: String,
    /// Send the scenario-context message before simulated calls.
    pub inject_context: bool,
    /// Model name recorded in reports (and priced, when a table is given).
    pub model: Option<String>,
}

/// Per-side marker bindings captured from responses.
struct Bindings(BTreeMap<String, Value>);

impl Bindings {
    fn render_fragment(value: &Value) -> String {
        match value {
            Value::String(s) => s.clone(),
            other => crate::json::canonical(other),
        }
    }

    /// Replaces `__marker__` references in text. Unknown markers stay
    /// literal: a failed extraction shows up as a `__marker__` path on the
    /// wire, which the server under test will answer (usually with an
    /// error) — a behavioral outcome, not an infrastructure one.
    fn render_text(&self, template: &str) -> String {
        marker_regex()
            .replace_all(template, |caps: &regex::Captures<'_>| {
                match self.0.get(&caps[1]) {
                    Some(value) => Bindings::render_fragment(value),
                    None => caps[0].to_string(),
                }
            })
            .into_owned()
    }

    /// Substitutes markers inside a body template. A string that is exactly
    /// one marker becomes the bound value with its type intact; any other
    /// string gets textual splicing.
    fn render_value(&self, template: &Value) -> Value {
        match template {
            Value::String(s) => {
                if let Some(m) = marker_regex().find(s) {
                    if m.start() == 0 && m.end() == s.len() {
                        let name = &s[2..s.len() - 2];
                        if let Some(bound) = self.0.get(name) {
                            return bound.clone();
                        }
                    }
                }
                Value::String(self.render_text(s))
            }
            Value::Array(items) => {
                Value::Array(items.iter().map(|v| self.render_value(v)).collect())
            }
            Value::Object(map) => Value::Object(
                map.iter()
                    .map(|(k, v)| (k.clone(), self.render_value(v)))
                    .collect(),
            ),
            other => other.clone(),
        }
    }
}

fn header_u64(res: &reqwest::Response, name: &str) -> Option<u64> {
    res.headers().get(name)?.to_str().ok()?.parse().ok()
}

fn header_f64(res: &reqwest::Response, name: &str) -> Option<f64> {
    res.headers().get(name)?.to_str().ok()?.parse().ok()
}

async fn run_call(
    http: &reqwest::Client,
    base: &str,
    call: &super::CallSpec,
    bindings: &mut Bindings,
) -> Result<SideObservation, reqwest::Error> {
    let path = bindings.render_text(&call.path);
    let method =
        reqwest::Method::from_bytes(call.method.as_bytes()).unwrap_or(reqwest::Method::GET);
    let mut url = format!("{base}{path}");
    if !call.query.is_empty() {
        let rendered: Vec<(String, String)> = call
            .query
            .iter()
            .map(|(k, v)| (k.clone(), bindings.render_text(v)))
            .collect();
        url.push('?');
        url.push_str(&serde_urlencoded::to_string(&rendered).unwrap_or_default());
    }
    let mut rb = http.request(method, url);
    if let Some(body) = &call.body {
        rb = rb.json(&bindings.render_value(body));
    }
    let res = rb.send().await?;
    let status = res.status().as_u16();
    let input_tokens = header_u64(&res, "x-sim-input-tokens");
    let output_tokens = header_u64(&res, "x-sim-output-tokens");
    let latency_ms = header_f64(&res, "x-sim-latency-ms");
    let bytes = res.bytes().await.unwrap_or_default();
    let body: Option<Value> = serde_json::from_slice(&bytes).ok();

    // Capture requested values for later calls; a missing pointer simply
    // leaves the marker unbound.
    for (marker, pointer) in &call.extract {
        let extracted = match &body {
            Some(b) if pointer.is_empty() => Some(b.clone()),
            Some(b) => b.pointer(pointer).cloned(),
            None => None,
        };
        if let Some(value) = extracted {
            bindings.0.insert(marker.clone(), value);
        }
    }

    Ok(SideObservation {
        path,
        status,
        body,
        input_tokens,
        output_tokens,
        latency_ms,
    })
}

async fn post_control(
    http: &reqwest::Client,
    url: String,
    body: Option<Value>,
) -> Result<u16, reqwest::Error> {
    let mut rb = http.post(url);
    if let Some(b) = body {
        rb = rb.json(&b);
    }
    Ok(rb.send().await?.status().as_u16())
}

fn infra_outcome(
    scenario: &Scenario,
    reason: String,
    controls: Vec<ControlRecord>,
    calls: Vec<CallOutcome>,
) -> ScenarioOutcome {
    ScenarioOutcome {
        name: scenario.name.clone(),
        category: scenario.category,
        novelty: scenario.novelty,
        infra: Some(reason),
        status_pass: false,
        body_pass: false,
        controls,
        calls,
    }
}

/// Drives a call sequence against one base URL with fresh marker bindings,
/// without scoring anything. This is the per-side half of the protocol,
/// public so a capture phase can replay suite scenarios against a live
/// stack (through recording proxies, say) before any comparison exists.
pub async fn drive_sequence(
    http: &reqwest::Client,
    base: &str,
    calls: &[super::CallSpec],
) -> Result<Vec<SideObservation>, String> {
    let mut bindings = Bindings(BTreeMap::new());
    let mut observations = Vec::with_capacity(calls.len());
    for (i, call) in calls.iter().enumerate() {
        match run_call(http, base, call, &mut bindings).await {
            Ok(obs) => observations.push(obs),
            Err(e) => return Err(format!("call {i} unreachable: {e}")),
        }
    }
    Ok(observations)
}

/// The scenario-context payload: the calls about to happen, nothing about
/// what they should return.
fn scenario_payload(scenario: &Scenario) -> Value {
    let calls: Vec<Value> = scenario
        .calls
        .iter()
        .map(|c| json!({"method": c.method, "path": c.path}))
        .collect();
    json!({"name": scenario.name, "calls": calls})
}

/// Runs one scenario through the five-step protocol. The scenario context
/// is posted to the simulator before the live run and again after the
/// simulator reset (the reset clears it); both posts are skipped when
/// `inject_context` is off.
pub async fn run_scenario(
    http: &reqwest::Client,
    cfg: &EvalConfig,
    scenario: &Scenario,
) -> ScenarioOutcome {
    let mut controls = Vec::new();

    // 1. Announce the upcoming call sequence to the simulator.
    if cfg.inject_context {
        match post_control(
            http,
            format!("{}/__mock__/scenario", cfg.sim_base),
            Some(scenario_payload(scenario)),
        )
        .await
        {
            Ok(status) => controls.push(ControlRecord {
                side: "sim",
                path: "/__mock__/scenario",
                status,
            }),
            Err(e) => {
                return infra_outcome(
                    scenario,
                    format!("sim scenario unreachable: {e}"),
                    controls,
                    Vec::new(),
                )
            }
        }
    }

    // 2. Live calls, from a known state.
    match post_control(http, format!("{}/__admin__/reset", cfg.live_base), None).await {
        Ok(status) => controls.push(ControlRecord {
            side: "live",
            path: "/__admin__/reset",
            status,
        }),
        Err(e) => {
            return infra_outcome(
                scenario,
                format!("live reset unreachable: {e}"),
                controls,
                Vec::new(),
            )
        }
    }
    let live_observations = match drive_sequence(http, &cfg.live_base, &scenario.calls).await {
        Ok(obs) => obs,
        Err(e) => return infra_outcome(scenario, format!("live {e}"), controls, Vec::new()),
    };

    // 3. Reset the simulator — which clears its scenario context — and
    // re-inject.
    match post_control(http, format!("{}/__mock__/reset", cfg.sim_base), None).await {
        Ok(status) => controls.push(ControlRecord {
            side: "sim",
            path: "/__mock__/reset",
            status,
        }),
        Err(e) => {
            return infra_outcome(
                scenario,
                format!("sim reset unreachable: {e}"),
                controls,
                Vec::new(),
            )
        }
    }
    if cfg.inject_context {
        match post_control(
            http,
            format!("{}/__mock__/scenario", cfg.sim_base),
            Some(scenario_payload(scenario)),
        )
        .await
        {
            Ok(status) => controls.push(ControlRecord {
                side: "sim",
                path: "/__mock__/scenario",
                status,
            }),
            Err(e) => {
                return infra_outcome(
                    scenario,
                    format!("sim scenario unreachable: {e}"),
                    controls,
                    Vec::new(),
                )
            }
        }
    }

    // 4–5. Simulated calls, with independent marker chasing, then scoring.
    let mut sim_bindings = Bindings(BTreeMap::new());
    let mut calls = Vec::with_capacity(scenario.calls.len());
    for (i, (call, live)) in scenario.calls.iter().zip(live_observations).enumerate() {
        let sim = match run_call(http, &cfg.sim_base, call, &mut sim_bindings).await {
            Ok(obs) => obs,
            Err(e) => {
                return infra_outcome(
                    scenario,
                    format!("sim call {i} unreachable: {e}"),
                    controls,
                    calls,
                )
            }
        };
        let status_match = live.status == sim.status;
        let shape_match = compare_body_shape(live.body.as_ref(), sim.body.as_ref());
        calls.push(CallOutcome {
            method: call.method.clone(),
            live,
            sim,
            status_match,
            shape_match,
        });
    }

    let status_pass = calls.iter().all(|c| c.status_match);
    let body_pass = status_pass && calls.iter().all(|c| c.shape_match);
    ScenarioOutcome {
        name: scenario.name.clone(),
        category: scenario.category,
        novelty: scenario.novelty,
        infra: None,
        status_pass,
        body_pass,
        controls,
        calls,
    }
}

/// Runs every scenario of a suite, sorted by name.
pub async fn run_suite(suite: &Suite, cfg: &EvalConfig) -> SuiteRun {
    let http = reqwest::Client::new();
    let started = Instant::now();
    let started_epoch_s = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);

    let mut outcomes = Vec::new();
    for scenario in suite.ordered_scenarios() {
        outcomes.push(run_scenario(&http, cfg, scenario).await);
    }

    let mut input_tokens = 0u64;
    let mut output_tokens = 0u64;
    for outcome in &outcomes {
        for call in &outcome.calls {
            input_tokens += call.sim.input_tokens.unwrap_or(0);
            output_tokens += call.sim.output_tokens.unwrap_or(0);
        }
    }

    SuiteRun {
        suite: suite.name.clone(),
        outcomes,
        model: cfg.model.clone(),
        input_tokens,
        output_tokens,
        wall_ms: started.elapsed().as_secs_f64() * 1_000.0,
        started_epoch_s,
    }
}
