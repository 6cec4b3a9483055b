//! Shipping service: fire-and-forget shipment creation (`202`) followed by
//! status polling. Progress is driven by the polls themselves — the Nth
//! status read advances `pending` → `shipped` → `delivered` at configurable
//! thresholds — which makes async-workflow behavior reproducible without
//! timers.

use super::{api_error, count_api_traffic, json_response, no_content, RequestCounter};
use axum::extract::{Path, State};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone)]
pub struct ShippingConfig {
    /// Poll count at which a shipment reports `shipped`.
    pub shipped_after: u64,
    /// Poll count at which a shipment reports `delivered`.
    pub delivered_after: u64,
}

impl Default for ShippingConfig {
    fn default() -> ShippingConfig {
        ShippingConfig {
            shipped_after: 2,
            delivered_after: 4,
        }
    }
}

struct Shipping {
    shipments: BTreeMap<String, u64>, // id -> polls seen
    counter: u64,
}

impl Shipping {
    fn fresh() -> Shipping {
        Shipping {
            shipments: BTreeMap::new(),
            counter: 0,
        }
    }
}

#[derive(Clone)]
struct AppState {
    shipping: Arc<Mutex<Shipping>>,
    counter: Arc<RequestCounter>,
    config: Arc<ShippingConfig>,
}

async fn create_shipment(State(state): State<AppState>, _body: Option<axum::Json<Value>>) -> Response {
    let mut shipping = state.shipping.lock().expect("not poisoned");
    shipping.counter += 1;
    let id = format!("shp-{}", shipping.counter);
    shipping.shipments.insert(id.clone(), 0);
    json_response(202, json!({"shipment_id": id, "status": "pending"}))
}

async fn get_shipment(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let mut shipping = state.shipping.lock().expect("not poisoned");
    let Some(polls) = shipping.shipments.get_mut(&id) else {
        return api_error(404, "shipment not found");
    };
    *polls += 1;
    let status = if *polls >= state.config.delivered_after {
        "delivered"
    } else if *polls >= state.config.shipped_after {
        "shipped"
    } else {
        "pending"
    };
    json_response(200, json!({"shipment_id": id, "status": status}))
}

async fn admin_reset(State(state): State<AppState>) -> Response {
    *state.shipping.lock().expect("not poisoned") = Shipping::fresh();
    state.counter.reset();
    no_content()
}

async fn admin_stats(State(state): State<AppState>) -> Response {
    json_response(200, json!({"requests": state.counter.count()}))
}

async fn mock_scenario() -> Response {
    no_content()
}

pub fn router(config: ShippingConfig) -> Router {
    let state = AppState {
        shipping: Arc::new(Mutex::new(Shipping::fresh())),
        counter: Arc::new(RequestCounter::default()),
        config: Arc::new(config),
    };
    Router::new()
        .route("/shipments", post(create_shipment))
        .route("/shipments/{id}", get(get_shipment))
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
