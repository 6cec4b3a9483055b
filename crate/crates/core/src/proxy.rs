//! Recording proxy: sits between a caller and a real service, forwards
//! everything, and appends each exchange to a JSONL trace file.
//!
//! Control traffic (`/__admin__/...`, `/__mock__/...`) is forwarded but not
//! recorded — resets and stats probes are test-rig plumbing, not service
//! behavior. Response headers are not captured: the interesting ones are
//! nondeterministic (`date`, connection management) and recording them would
//! make otherwise identical capture runs differ.

use crate::host::{serve_router, ServerHandle};
use crate::trace::{HttpRequestRecord, HttpResponseRecord, Interaction, TraceStore};
use axum::body::Body;
use axum::extract::State;
use axum::http::{Request, StatusCode};
use axum::response::Response;
use axum::Router;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Clone)]
struct ProxyState {
    http: reqwest::Client,
    upstream: String,
    service: String,
    out: Arc<PathBuf>,
}

fn now_epoch_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn error_response(status: StatusCode, message: &str) -> Response {
    Response::builder()
        .status(status)
        .header("content-type", "application/json")
        .body(Body::from(
            serde_json::json!({ "error": message }).to_string(),
        ))
        .expect("static response builds")
}

async fn forward(State(state): State<ProxyState>, request: Request<Body>) -> Response {
    let method = request.method().as_str().to_string();
    let path = request.uri().path().to_string();
    let raw_query = request.uri().query().map(str::to_string);
    let header_pairs: Vec<(String, String)> = request
        .headers()
        .iter()
        .filter(|(name, _)| {
            let n = name.as_str();
            n != "host" && n != "content-length"
        })
        .filter_map(|(name, value)| {
            value
                .to_str()
                .ok()
                .map(|v| (name.as_str().to_string(), v.to_string()))
        })
        .collect();
    let request_bytes = match axum::body::to_bytes(request.into_body(), 16 * 1024 * 1024).await {
        Ok(b) => b,
        Err(_) => return error_response(StatusCode::BAD_REQUEST, "request body unreadable"),
    };

    let mut url = format!("{}{}", state.upstream, path);
    if let Some(q) = &raw_query {
        url.push('?');
        url.push_str(q);
    }
    let reqwest_method = reqwest::Method::from_bytes(method.as_bytes())
        .unwrap_or(reqwest::Method::GET);
    let mut outgoing = state.http.request(reqwest_method, &url);
    for (name, value) in &header_pairs {
        outgoing = outgoing.header(name, value);
    }
    if !request_bytes.is_empty() {
        outgoing = outgoing.body(request_bytes.to_vec());
    }

    let upstream_response = match outgoing.send().await {
        Ok(r) => r,
        Err(_) => return error_response(StatusCode::BAD_GATEWAY, "upstream unreachable"),
    };
    let status = upstream_response.status().as_u16();
    let content_type = upstream_response
        .headers()
        .get("content-type")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let response_bytes = upstream_response.bytes().await.unwrap_or_default();

    let control = path.starts_with("/__admin__") || path.starts_with("/__mock__");
    if !control {
        let query: Vec<(String, String)> = raw_query
            .as_deref()
            .map(|q| serde_urlencoded::from_str(q).unwrap_or_default())
            .unwrap_or_default();
        let interaction = Interaction {
            request: HttpRequestRecord::new(
                &method,
                &path,
                query,
                serde_json::from_slice(&request_bytes).ok(),
                header_pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())),
            ),
            response: HttpResponseRecord::new(
                status,
                serde_json::from_slice(&response_bytes).ok(),
            ),
            service: state.service.clone(),
            timestamp: now_epoch_seconds(),
            session: None,
        };
        if let Err(e) = TraceStore::append_line(state.out.as_ref(), &interaction) {
            tracing::error!("trace capture failed: {e}");
            return error_response(StatusCode::INTERNAL_SERVER_ERROR, "trace capture failed");
        }
    }

    let mut builder =
        Response::builder().status(StatusCode::from_u16(status).unwrap_or(StatusCode::BAD_GATEWAY));
    if let Some(ct) = content_type {
        builder = builder.header("content-type", ct);
    }
    builder
        .body(Body::from(response_bytes))
        .expect("response builds")
}

/// Builds a recording-proxy router.
pub fn proxy_router(upstream: impl Into<String>, service: impl Into<String>, out: PathBuf) -> Router {
    let upstream = upstream.into().trim_end_matches('/').to_string();
    Router::new()
        .fallback(forward)
        .with_state(ProxyState {
            http: reqwest::Client::new(),
            upstream,
            service: service.into(),
            out: Arc::new(out),
        })
}

/// Serves a recording proxy on `127.0.0.1:port` (0 picks an ephemeral port).
pub async fn serve_proxy(
    upstream: impl Into<String>,
    service: impl Into<String>,
    out: PathBuf,
    port: u16,
) -> std::io::Result<ServerHandle> {
    serve_router(proxy_router(upstream, service, out), port).await
}
