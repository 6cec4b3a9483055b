//! Reference services for exercising the workbench end to end: an inventory
//! service with optimistic concurrency, a payment service with expiring
//! tokens, an async shipping service, and an order service that drives the
//! other three as a saga with compensation.
//!
//! Every service exposes the same operational routes next to its API:
//!
//! * `POST /__admin__/reset` — reseed state (the order service cascades the
//!   reset to its dependencies)
//! * `GET /__admin__/stats` — `{"requests": n}`, counting only API traffic
//! * `POST /__mock__/scenario` / `POST /__mock__/reset` — accepted so a test
//!   driver can address a real service and a mock interchangeably; scenario
//!   context is a no-op here, reset behaves like the admin reset
//!
//! [`workload`] drives the stack deterministically to produce capture
//! traffic.

pub mod inventory;
pub mod order;
pub mod payment;
pub mod shipping;
pub mod workload;

use crate::host::{serve_router, ServerHandle};
use axum::body::Body;
use axum::extract::{Request, State};
use axum::http::StatusCode;
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use serde_json::{json, Value};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Counts API requests, skipping operational routes, so tests can assert
/// whether a service was actually called.
#[derive(Default)]
pub struct RequestCounter(AtomicU64);

impl RequestCounter {
    pub fn count(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

pub(crate) async fn count_api_traffic(
    State(counter): State<Arc<RequestCounter>>,
    request: Request<Body>,
    next: Next,
) -> Response {
    let path = request.uri().path();
    if !path.starts_with("/__admin__") && !path.starts_with("/__mock__") {
        counter.0.fetch_add(1, Ordering::Relaxed);
    }
    next.run(request).await
}

pub(crate) fn json_response(status: u16, body: Value) -> Response {
    (
        StatusCode::from_u16(status).expect("status in range"),
        [("content-type", "application/json")],
        body.to_string(),
    )
        .into_response()
}

pub(crate) fn api_error(status: u16, message: &str) -> Response {
    json_response(status, json!({ "error": message }))
}

pub(crate) fn no_content() -> Response {
    StatusCode::NO_CONTENT.into_response()
}

/// All four reference services running together.
pub struct DemoStack {
    pub inventory: ServerHandle,
    pub payment: ServerHandle,
    pub shipping: ServerHandle,
    pub order: ServerHandle,
}

/// Per-service ports; 0 picks an ephemeral port.
#[derive(Debug, Clone, Copy, Default)]
pub struct DemoPorts {
    pub inventory: u16,
    pub payment: u16,
    pub shipping: u16,
    pub order: u16,
}

/// Tunables for the stack; defaults match the documented behaviors.
#[derive(Debug, Clone, Default)]
pub struct DemoConfig {
    pub payment: payment::PaymentConfig,
    pub shipping: shipping::ShippingConfig,
}

impl DemoStack {
    /// Starts all four services, wiring the order service to the other
    /// three directly.
    pub async fn launch(ports: DemoPorts, config: DemoConfig) -> std::io::Result<DemoStack> {
        let inventory = serve_router(inventory::router(), ports.inventory).await?;
        let payment = serve_router(payment::router(config.payment), ports.payment).await?;
        let shipping = serve_router(shipping::router(config.shipping), ports.shipping).await?;
        let order = serve_router(
            order::router(order::OrderConfig {
                inventory_base: inventory.base_url(),
                payment_base: payment.base_url(),
                shipping_base: shipping.base_url(),
            }),
            ports.order,
        )
        .await?;
        Ok(DemoStack {
            inventory,
            payment,
            shipping,
            order,
        })
    }

    /// Everything on ephemeral ports with default behavior.
    pub async fn launch_ephemeral() -> std::io::Result<DemoStack> {
        DemoStack::launch(DemoPorts::default(), DemoConfig::default()).await
    }

    pub async fn shutdown(self) {
        self.order.shutdown().await;
        self.shipping.shutdown().await;
        self.payment.shutdown().await;
        self.inventory.shutdown().await;
    }
}

/// Id shapes the reference services mint, as normalizer patterns. Trace
/// tooling pointed at this stack should use these so `/items/item-17` and
/// `/items/item-added-later` fold into the same endpoint.
pub const ID_PATTERNS: [&str; 6] = [
    "item-[0-9]+",
    "rsv-[0-9]+",
    "tok-[0-9]+",
    "shp-[0-9]+",
    "ord-[0-9]+",
    "gen-[0-9]+",
];
