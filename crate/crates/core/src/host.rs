//! HTTP hosting for the mock engines.
//!
//! Every engine — replay, mined rules, contract execution, online model —
//! is exposed behind the same [`Simulator`] trait and served by one axum
//! app. Alongside the simulated endpoints the server offers control routes:
//!
//! * `POST /__mock__/scenario` — install scenario context (engines without a
//!   use for it accept and ignore it)
//! * `POST /__mock__/reset` and `POST /__admin__/reset` — drop session state
//!
//! Responses from the online engine additionally carry `X-Sim-Input-Tokens`,
//! `X-Sim-Output-Tokens`, and `X-Sim-Latency-Ms` headers so callers can
//! account costs without scraping logs.

use crate::ir::IrSession;
use crate::miner::MinerSession;
use crate::replay::ReplayIndex;
use crate::response::MockResponse;
use crate::sim::{CallStats, SimSession};
use crate::trace::HttpRequestRecord;
use async_trait::async_trait;
use axum::body::Body;
use axum::extract::State;
use axum::http::{HeaderName, HeaderValue, Request, StatusCode};
use axum::response::Response;
use axum::routing::post;
use axum::Router;
use serde::Deserialize;
use std::net::SocketAddr;
use std::sync::Arc;
use tokio::sync::{oneshot, Mutex};

/// A mock engine the host can serve.
#[async_trait]
pub trait Simulator: Send {
    async fn respond(&mut self, request: &HttpRequestRecord) -> MockResponse;

    /// Scenario context: name plus upcoming `(method, path)` calls. Engines
    /// that cannot use it simply ignore it.
    fn set_scenario(&mut self, _name: &str, _calls: &[(String, String)]) {}

    /// Drops per-session state so the next scenario starts fresh.
    fn reset(&mut self);

    /// Cost of the most recent call, when the engine tracks one.
    fn last_call(&self) -> Option<CallStats> {
        None
    }
}

/// Replay is stateless; reset has nothing to drop.
pub struct ReplaySim(pub ReplayIndex);

#[async_trait]
impl Simulator for ReplaySim {
    async fn respond(&mut self, request: &HttpRequestRecord) -> MockResponse {
        self.0.respond(request)
    }
    fn reset(&mut self) {}
}

pub struct MinerSim(pub MinerSession);

#[async_trait]
impl Simulator for MinerSim {
    async fn respond(&mut self, request: &HttpRequestRecord) -> MockResponse {
        self.0.serve(request)
    }
    fn reset(&mut self) {
        self.0.reset();
    }
}

pub struct IrSim(pub IrSession);

#[async_trait]
impl Simulator for IrSim {
    async fn respond(&mut self, request: &HttpRequestRecord) -> MockResponse {
        self.0.serve(request)
    }
    fn reset(&mut self) {
        self.0.reset();
    }
}

pub struct OnlineSim(pub SimSession);

#[async_trait]
impl Simulator for OnlineSim {
    async fn respond(&mut self, request: &HttpRequestRecord) -> MockResponse {
        self.0.handle_request(request).await
    }
    fn set_scenario(&mut self, name: &str, calls: &[(String, String)]) {
        self.0.set_scenario(name, calls);
    }
    fn reset(&mut self) {
        self.0.reset();
    }
    fn last_call(&self) -> Option<CallStats> {
        self.0.last_call()
    }
}

type SharedSim = Arc<Mutex<Box<dyn Simulator>>>;

#[derive(Deserialize)]
struct ScenarioCall {
    method: String,
    path: String,
}

#[derive(Deserialize)]
struct ScenarioPayload {
    name: String,
    #[serde(default)]
    calls: Vec<ScenarioCall>,
}

fn error_response(status: StatusCode, message: &str) -> Response {
    let body = serde_json::json!({ "error": message });
    Response::builder()
        .status(status)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .expect("static response builds")
}

async fn set_scenario(State(sim): State<SharedSim>, body: axum::body::Bytes) -> Response {
    let payload: ScenarioPayload = match serde_json::from_slice(&body) {
        Ok(p) => p,
        Err(_) => {
            return error_response(
                StatusCode::BAD_REQUEST,
                "scenario payload must be {\"name\", \"calls\": [{\"method\", \"path\"}]}",
            )
        }
    };
    let calls: Vec<(String, String)> = payload
        .calls
        .into_iter()
        .map(|c| (c.method.to_ascii_uppercase(), c.path))
        .collect();
    sim.lock().await.set_scenario(&payload.name, &calls);
    StatusCode::NO_CONTENT.into_response()
}

async fn reset(State(sim): State<SharedSim>) -> Response {
    sim.lock().await.reset();
    StatusCode::NO_CONTENT.into_response()
}

use axum::response::IntoResponse;

async fn handle_any(State(sim): State<SharedSim>, request: Request<Body>) -> Response {
    let method = request.method().as_str().to_string();
    let path = request.uri().path().to_string();
    let query: Vec<(String, String)> = request
        .uri()
        .query()
        .map(|q| serde_urlencoded::from_str(q).unwrap_or_default())
        .unwrap_or_default();
    let header_pairs: Vec<(String, String)> = request
        .headers()
        .iter()
        .filter_map(|(name, value)| {
            value
                .to_str()
                .ok()
                .map(|v| (name.as_str().to_string(), v.to_string()))
        })
        .collect();

    let bytes = match axum::body::to_bytes(request.into_body(), 16 * 1024 * 1024).await {
        Ok(b) => b,
        Err(_) => return error_response(StatusCode::BAD_REQUEST, "request body unreadable"),
    };
    let body = if bytes.is_empty() {
        None
    } else {
        match serde_json::from_slice(&bytes) {
            Ok(v) => Some(v),
            Err(_) => {
                return error_response(StatusCode::BAD_REQUEST, "request body is not JSON")
            }
        }
    };

    let record = HttpRequestRecord::new(
        &method,
        &path,
        query,
        body,
        header_pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())),
    );

    let mut sim = sim.lock().await;
    let mock = sim.respond(&record).await;
    let stats = sim.last_call();
    drop(sim);

    render_mock(&mock, stats)
}

/// Converts an engine's answer into a wire response.
pub fn render_mock(mock: &MockResponse, stats: Option<CallStats>) -> Response {
    let status = StatusCode::from_u16(mock.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let mut builder = Response::builder().status(status);
    if let Some(headers) = builder.headers_mut() {
        for (name, value) in &mock.headers {
            // Model-authored header names can be arbitrary text; drop the
            // unrepresentable ones rather than failing the response.
            if let (Ok(name), Ok(value)) = (
                HeaderName::try_from(name.as_str()),
                HeaderValue::try_from(value.as_str()),
            ) {
                headers.insert(name, value);
            }
        }
        if let Some(stats) = stats {
            headers.insert(
                HeaderName::from_static("x-sim-input-tokens"),
                HeaderValue::from_str(&stats.input_tokens.to_string()).expect("digits"),
            );
            headers.insert(
                HeaderName::from_static("x-sim-output-tokens"),
                HeaderValue::from_str(&stats.output_tokens.to_string()).expect("digits"),
            );
            headers.insert(
                HeaderName::from_static("x-sim-latency-ms"),
                HeaderValue::from_str(&format!("{:.3}", stats.latency_ms)).expect("digits"),
            );
        }
    }
    match &mock.body {
        Some(body) => builder
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(body).expect("json body")))
            .expect("response builds"),
        None => builder.body(Body::empty()).expect("response builds"),
    }
}

/// A running mock server bound to a local port.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Signals graceful shutdown and waits for the server task to finish.
    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.task.abort();
    }
}

/// Builds the mock router around a shared engine. Exposed separately from
/// [`serve`] so embedders can mount it themselves.
pub fn mock_router(sim: SharedSim) -> Router {
    Router::new()
        .route("/__mock__/scenario", post(set_scenario))
        .route("/__mock__/reset", post(reset))
        .route("/__admin__/reset", post(reset))
        .fallback(handle_any)
        .with_state(sim)
}

/// Serves an engine on `127.0.0.1:port` (0 picks an ephemeral port).
pub async fn serve(sim: Box<dyn Simulator>, port: u16) -> std::io::Result<ServerHandle> {
    serve_router(mock_router(Arc::new(Mutex::new(sim))), port).await
}

/// Serves any router on `127.0.0.1:port` (0 picks an ephemeral port).
pub async fn serve_router(router: Router, port: u16) -> std::io::Result<ServerHandle> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let server = axum::serve(listener, router).with_graceful_shutdown(async {
            let _ = rx.await;
        });
        if let Err(e) = server.await {
            tracing::error!("mock server on {addr} failed: {e}");
        }
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        task,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::build_index;
    use crate::sim::client::ScriptedClient;
    use crate::sim::prompt::{DepSource, SignalConfig};
    use crate::trace::*;
    use serde_json::json;

    fn tiny_store() -> TraceStore {
        TraceStore::from_interactions(
            vec![Interaction {
                request: HttpRequestRecord::simple("GET", "/items"),
                response: HttpResponseRecord::new(200, Some(json!([{"id": "item-001"}]))),
                service: "inventory".into(),
                timestamp: 1,
                session: None,
            }],
            PathNormalizer::default(),
        )
    }

    #[tokio::test]
    async fn serves_replay_and_control_endpoints() {
        let index = build_index(&tiny_store());
        let server = serve(Box::new(ReplaySim(index)), 0).await.unwrap();
        let client = reqwest::Client::new();
        let base = server.base_url();

        let res = client.get(format!("{base}/items")).send().await.unwrap();
        assert_eq!(res.status().as_u16(), 200);
        assert_eq!(
            res.json::<serde_json::Value>().await.unwrap(),
            json!([{"id": "item-001"}])
        );

        let res = client.get(format!("{base}/absent")).send().await.unwrap();
        assert_eq!(res.status().as_u16(), 501);

        let res = client
            .post(format!("{base}/__mock__/scenario"))
            .json(&json!({"name": "s", "calls": [{"method": "GET", "path": "/items"}]}))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status().as_u16(), 204);

        for route in ["/__mock__/reset", "/__admin__/reset"] {
            let res = client.post(format!("{base}{route}")).send().await.unwrap();
            assert_eq!(res.status().as_u16(), 204, "{route}");
        }

        let res = client
            .post(format!("{base}/__mock__/scenario"))
            .body("not json")
            .send()
            .await
            .unwrap();
        assert_eq!(res.status().as_u16(), 400);

        server.shutdown().await;
    }

    #[tokio::test]
    async fn non_json_bodies_are_rejected_before_the_engine() {
        let index = build_index(&tiny_store());
        let server = serve(Box::new(ReplaySim(index)), 0).await.unwrap();
        let client = reqwest::Client::new();
        let res = client
            .post(format!("{}/items", server.base_url()))
            .body("{not json")
            .send()
            .await
            .unwrap();
        assert_eq!(res.status().as_u16(), 400);
        assert_eq!(
            res.json::<serde_json::Value>().await.unwrap(),
            json!({"error": "request body is not JSON"})
        );
        server.shutdown().await;
    }

    #[tokio::test]
    async fn online_responses_carry_cost_headers() {
        let client_model = Arc::new(ScriptedClient::always(json!({"status": 200, "body": {}})));
        let signals = SignalConfig::new(
            Some(DepSource::Single {
                name: "svc.rs".into(),
                content: "// svc".into(),
            }),
            None,
            None,
        )
        .unwrap();
        let session = SimSession::new(client_model, &signals);
        let server = serve(Box::new(OnlineSim(session)), 0).await.unwrap();

        let res = reqwest::Client::new()
            .get(format!("{}/items?limit=2", server.base_url()))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status().as_u16(), 200);
        let tokens: u64 = res.headers()["x-sim-input-tokens"]
            .to_str()
            .unwrap()
            .parse()
            .unwrap();
        assert!(tokens > 0);
        assert!(res.headers().contains_key("x-sim-output-tokens"));
        assert!(res.headers().contains_key("x-sim-latency-ms"));
        server.shutdown().await;
    }

    #[tokio::test]
    async fn query_strings_reach_the_engine_as_pairs() {
        // An online engine sees the query pairs in its serialized request.
        let client_model = Arc::new(ScriptedClient::always(json!({"status": 204})));
        let signals = SignalConfig::new(None, None, Some("summary".into())).unwrap();
        let session = SimSession::new(client_model.clone(), &signals);
        let server = serve(Box::new(OnlineSim(session)), 0).await.unwrap();

        reqwest::Client::new()
            .get(format!("{}/items?limit=2&offset=4", server.base_url()))
            .send()
            .await
            .unwrap();
        let sent = client_model.last_messages();
        let user = &sent.last().unwrap().content;
        assert!(user.contains(r#"query":[["limit","2"],["offset","4"]]"#), "{user}");
        server.shutdown().await;
    }
}
