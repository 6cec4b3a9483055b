//! Payment service: short-lived charge tokens and an authorization rule
//! set small enough to reason about but easy to get subtly wrong:
//!
//! * tokens expire after a TTL and are single-lineage — refreshing one
//!   invalidates it and issues a successor
//! * amounts over 100 are *declined*, not rejected: `200` with
//!   `{"authorised": false, "reason": "over_limit"}` (the boundary itself,
//!   exactly 100, authorises)
//! * card numbers starting with `3` are unsupported upfront: `400`
//!
//! Declines versus rejections is the point: a mock that only copies status
//! codes can get the 200 right and still tell the caller the charge went
//! through.
//!
//! When [`PaymentConfig::honor_test_clock`] is set, an `X-Test-Clock`
//! header (seconds) overrides the service's clock so expiry is testable
//! without sleeping.

use super::{api_error, count_api_traffic, json_response, no_content, RequestCounter};
use axum::extract::{Path, State};
use axum::http::HeaderMap;
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct PaymentConfig {
    /// Token lifetime in seconds.
    pub token_ttl: u64,
    /// Honor `X-Test-Clock` headers instead of real elapsed time.
    pub honor_test_clock: bool,
}

impl Default for PaymentConfig {
    fn default() -> PaymentConfig {
        PaymentConfig {
            token_ttl: 300,
            honor_test_clock: false,
        }
    }
}

struct TokenInfo {
    issued_at: u64,
    invalidated: bool,
}

struct Payment {
    tokens: BTreeMap<String, TokenInfo>,
    counter: u64,
}

impl Payment {
    fn fresh() -> Payment {
        Payment {
            tokens: BTreeMap::new(),
            counter: 0,
        }
    }
}

#[derive(Clone)]
struct AppState {
    payment: Arc<Mutex<Payment>>,
    counter: Arc<RequestCounter>,
    config: Arc<PaymentConfig>,
    started: Instant,
}

impl AppState {
    fn now(&self, headers: &HeaderMap) -> u64 {
        if self.config.honor_test_clock {
            if let Some(clock) = headers
                .get("x-test-clock")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse::<u64>().ok())
            {
                return clock;
            }
        }
        self.started.elapsed().as_secs()
    }

    fn token_valid(&self, payment: &Payment, token: &str, now: u64) -> bool {
        match payment.tokens.get(token) {
            Some(info) => !info.invalidated && now < info.issued_at + self.config.token_ttl,
            None => false,
        }
    }
}

fn mint_token(payment: &mut Payment, now: u64) -> String {
    payment.counter += 1;
    let token = format!("tok-{}", payment.counter);
    payment.tokens.insert(
        token.clone(),
        TokenInfo {
            issued_at: now,
            invalidated: false,
        },
    );
    token
}

async fn issue_token(State(state): State<AppState>, headers: HeaderMap) -> Response {
    let now = state.now(&headers);
    let mut payment = state.payment.lock().expect("not poisoned");
    let token = mint_token(&mut payment, now);
    json_response(
        201,
        json!({"token": token, "expires_in": state.config.token_ttl}),
    )
}

async fn refresh_token(
    State(state): State<AppState>,
    Path(token): Path<String>,
    headers: HeaderMap,
) -> Response {
    let now = state.now(&headers);
    let mut payment = state.payment.lock().expect("not poisoned");
    if !state.token_valid(&payment, &token, now) {
        return api_error(401, "invalid token");
    }
    payment.tokens.get_mut(&token).expect("checked above").invalidated = true;
    let successor = mint_token(&mut payment, now);
    json_response(
        201,
        json!({"token": successor, "expires_in": state.config.token_ttl}),
    )
}

async fn charge(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Option<axum::Json<Value>>,
) -> Response {
    let body = body.map(|axum::Json(v)| v).unwrap_or(Value::Null);
    let token = body.get("token").and_then(Value::as_str);
    let amount = body.get("amount").and_then(Value::as_f64);
    let card = body.get("card_number").and_then(Value::as_str);
    let (Some(token), Some(amount), Some(card)) = (token, amount, card) else {
        return api_error(422, "invalid charge request");
    };
    if amount <= 0.0 || card.is_empty() {
        return api_error(422, "invalid charge request");
    }

    let now = state.now(&headers);
    let payment = state.payment.lock().expect("not poisoned");
    if !state.token_valid(&payment, token, now) {
        return api_error(401, "invalid token");
    }
    if card.starts_with('3') {
        return api_error(400, "unsupported card type");
    }
    if amount > 100.0 {
        return json_response(200, json!({"authorised": false, "reason": "over_limit"}));
    }
    // Echo the amount exactly as sent (the body's own JSON number).
    json_response(
        200,
        json!({"authorised": true, "amount": body["amount"]}),
    )
}

async fn admin_reset(State(state): State<AppState>) -> Response {
    *state.payment.lock().expect("not poisoned") = Payment::fresh();
    state.counter.reset();
    no_content()
}

async fn admin_stats(State(state): State<AppState>) -> Response {
    json_response(200, json!({"requests": state.counter.count()}))
}

async fn mock_scenario() -> Response {
    no_content()
}

pub fn router(config: PaymentConfig) -> Router {
    let state = AppState {
        payment: Arc::new(Mutex::new(Payment::fresh())),
        counter: Arc::new(RequestCounter::default()),
        config: Arc::new(config),
        started: Instant::now(),
    };
    Router::new()
        .route("/tokens", post(issue_token))
        .route("/tokens/{token}/refresh", post(refresh_token))
        .route("/charge", post(charge))
        .route("/__admin__/reset", post(admin_reset))
        .route("/__admin__/stats", get(admin_stats))
        .route("/__mock__/scenario", post(mock_scenario))
        .route("/__mock__/reset", post(admin_reset))
        .layer(axum::middleware::from_fn_with_state(
            state.counter.clone(),
            count_api_traffic,
        ))
        .with_state(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::host::serve_router;

    async fn post_json(client: &reqwest::Client, url: String, body: Value) -> (u16, Value) {
        let res = client.post(url).json(&body).send().await.unwrap();
        let status = res.status().as_u16();
        (status, res.json::<Value>().await.unwrap_or(Value::Null))
    }

    #[tokio::test]
    async fn token_issue_charge_and_decline_boundary() {
        let server = serve_router(router(PaymentConfig::default()), 0).await.unwrap();
        let base = server.base_url();
        let client = reqwest::Client::new();

        let (status, body) = post_json(&client, format!("{base}/tokens"), json!({})).await;
        assert_eq!(status, 201);
        assert_eq!(body, json!({"token": "tok-1", "expires_in": 300}));

        let charge = |amount: Value| {
            json!({"token": "tok-1", "amount": amount, "card_number": "4242424242424242"})
        };

        let (status, body) =
            post_json(&client, format!("{base}/charge"), charge(json!(42.5))).await;
        assert_eq!(status, 200);
        assert_eq!(body, json!({"authorised": true, "amount": 42.5}));

        // Exactly 100 authorises; one cent over is declined with a 200.
        let (status, body) =
            post_json(&client, format!("{base}/charge"), charge(json!(100.0))).await;
        assert_eq!(status, 200);
        assert_eq!(body["authorised"], json!(true));

        let (status, body) =
            post_json(&client, format!("{base}/charge"), charge(json!(100.01))).await;
        assert_eq!(status, 200);
        assert_eq!(body, json!({"authorised": false, "reason": "over_limit"}));

        // Amex-style numbers are rejected outright.
        let (status, body) = post_json(
            &client,
            format!("{base}/charge"),
            json!({"token": "tok-1", "amount": 10, "card_number": "371449635398431"}),
        )
        .await;
        assert_eq!(status, 400);
        assert_eq!(body, json!({"error": "unsupported card type"}));

        let (status, body) = post_json(
            &client,
            format!("{base}/charge"),
            json!({"token": "tok-1", "card_number": "4242424242424242"}),
        )
        .await;
        assert_eq!(status, 422);
        assert_eq!(body, json!({"error": "invalid charge request"}));

        let (status, body) = post_json(
            &client,
            format!("{base}/charge"),
            json!({"token": "tok-99", "amount": 10, "card_number": "4242424242424242"}),
        )
        .await;
        assert_eq!(status, 401);
        assert_eq!(body, json!({"error": "invalid token"}));

        server.shutdown().await;
    }

    #[tokio::test]
    async fn refresh_invalidates_the_predecessor() {
        let server = serve_router(router(PaymentConfig::default()), 0).await.unwrap();
        let base = server.base_url();
        let client = reqwest::Client::new();

        post_json(&client, format!("{base}/tokens"), json!({})).await;
        let (status, body) =
            post_json(&client, format!("{base}/tokens/tok-1/refresh"), json!({})).await;
        assert_eq!(status, 201);
        assert_eq!(body["token"], json!("tok-2"));

        // The refreshed-away token no longer charges or refreshes.
        let (status, _) = post_json(
            &client,
            format!("{base}/charge"),
            json!({"token": "tok-1", "amount": 5, "card_number": "4242424242424242"}),
        )
        .await;
        assert_eq!(status, 401);
        let (status, _) =
            post_json(&client, format!("{base}/tokens/tok-1/refresh"), json!({})).await;
        assert_eq!(status, 401);

        let (status, _) = post_json(
            &client,
            format!("{base}/charge"),
            json!({"token": "tok-2", "amount": 5, "card_number": "4242424242424242"}),
        )
        .await;
        assert_eq!(status, 200);

        let (status, _) =
            post_json(&client, format!("{base}/tokens/tok-77/refresh"), json!({})).await;
        assert_eq!(status, 401);

        server.shutdown().await;
    }

    #[tokio::test]
    async fn test_clock_drives_expiry_when_enabled() {
        let config = PaymentConfig {
            token_ttl: 300,
            honor_test_clock: true,
        };
        let server = serve_router(router(config), 0).await.unwrap();
        let base = server.base_url();
        let client = reqwest::Client::new();

        let res = client
            .post(format!("{base}/tokens"))
            .header("X-Test-Clock", "1000")
            .send()
            .await
            .unwrap();
        assert_eq!(res.status().as_u16(), 201);

        // Within the TTL the token charges fine...
        let res = client
            .post(format!("{base}/charge"))
            .header("X-Test-Clock", "1299")
            .json(&json!({"token": "tok-1", "amount": 5, "card_number": "4242424242424242"}))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status().as_u16(), 200);

        // ...and at issued_at + ttl it is expired.
        let res = client
            .post(format!("{base}/charge"))
            .header("X-Test-Clock", "1300")
            .json(&json!({"token": "tok-1", "amount": 5, "card_number": "4242424242424242"}))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status().as_u16(), 401);

        server.shutdown().await;
    }

    #[tokio::test]
    async fn test_clock_is_ignored_by_default() {
        let server = serve_router(router(PaymentConfig::default()), 0).await.unwrap();
        let base = server.base_url();
        let client = reqwest::Client::new();
        client.post(format!("{base}/tokens")).send().await.unwrap();
        let res = client
            .post(format!("{base}/charge"))
            .header("X-Test-Clock", "999999")
            .json(&json!({"token": "tok-1", "amount": 5, "card_number": "4242424242424242"}))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status().as_u16(), 200, "header must not expire the token");
        server.shutdown().await;
    }
}
