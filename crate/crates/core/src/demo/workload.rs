//! Deterministic traffic generator for the reference stack.
//!
//! Each round touches every service — browsing, item CRUD, a reserve →
//! confirm flow, token issue (and refresh on odd rounds), an in-limit
//! charge, a shipment with a few polls, and one full order through the
//! saga. Amounts and stock counts come from a seeded RNG, so two runs with
//! the same seed and rounds produce identical request sequences, and every
//! call is expected to succeed: the generator drives the happy paths, which
//! keeps deliberately novel error scenarios out of the captured traces.
//! [`capture_traces`] wraps the run with recording proxies to produce
//! per-service JSONL files.

use super::DemoStack;
use crate::host::ServerHandle;
use crate::proxy::serve_proxy;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("{method} {url} failed: {source}")]
    Network {
        method: String,
        url: String,
        #[source]
        source: reqwest::Error,
    },
    #[error("{method} {url} answered {status} (expected {expected}): {body}")]
    UnexpectedStatus {
        method: String,
        url: String,
        status: u16,
        expected: u16,
        body: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Base URLs the workload talks to. Pointing the first three at recording
/// proxies (and the order service's config at the same proxies) is how
/// capture runs collect traces.
#[derive(Debug, Clone)]
pub struct WorkloadTargets {
    pub inventory: String,
    pub payment: String,
    pub shipping: String,
    pub order: String,
}

pub struct WorkloadReport {
    pub requests: u64,
}

struct Driver {
    http: reqwest::Client,
    requests: u64,
}

impl Driver {
    async fn call(
        &mut self,
        method: &str,
        url: String,
        body: Option<Value>,
        expected: u16,
    ) -> Result<Value, WorkloadError> {
        let mut rb = match method {
            "GET" => self.http.get(&url),
            "DELETE" => self.http.delete(&url),
            _ => self.http.post(&url),
        };
        if let Some(b) = &body {
            rb = rb.json(b);
        }
        let res = rb.send().await.map_err(|source| WorkloadError::Network {
            method: method.to_string(),
            url: url.clone(),
            source,
        })?;
        self.requests += 1;
        let status = res.status().as_u16();
        let text = res.text().await.unwrap_or_default();
        if status != expected {
            return Err(WorkloadError::UnexpectedStatus {
                method: method.to_string(),
                url,
                status,
                expected,
                body: text,
            });
        }
        Ok(serde_json::from_str(&text).unwrap_or(Value::Null))
    }
}

fn two_decimals(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

const CARD: &str = "4242424242424242";

/// Runs `rounds` rounds of traffic. Every response is checked against the
/// expected status, so behavioral drift in the services fails loudly here.
pub async fn run_workload(
    targets: &WorkloadTargets,
    rounds: u32,
    seed: u64,
) -> Result<WorkloadReport, WorkloadError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut driver = Driver {
        http: reqwest::Client::new(),
        requests: 0,
    };
    let inv = &targets.inventory;
    let pay = &targets.payment;
    let shp = &targets.shipping;

    for round in 0..rounds {
        // Browse.
        driver.call("GET", format!("{inv}/items"), None, 200).await?;
        driver
            .call("GET", format!("{inv}/items/item-001"), None, 200)
            .await?;

        // Create, read back, delete.
        let stock: i64 = rng.random_range(1..=20);
        let created = driver
            .call(
                "POST",
                format!("{inv}/items"),
                Some(json!({"stock": stock})),
                201,
            )
            .await?;
        let item_id = created["id"].as_str().unwrap_or_default().to_string();
        driver
            .call("GET", format!("{inv}/items/{item_id}"), None, 200)
            .await?;
        driver
            .call("DELETE", format!("{inv}/items/{item_id}"), None, 204)
            .await?;

        // Reserve one unit of the deep-stock item and confirm it.
        let item = driver
            .call("GET", format!("{inv}/items/item-002"), None, 200)
            .await?;
        let reservation = driver
            .call(
                "POST",
                format!("{inv}/items/item-002/reserve"),
                Some(json!({"quantity": 1, "version": item["version"]})),
                201,
            )
            .await?;
        let rsv = reservation["reservation_id"].as_str().unwrap_or_default();
        driver
            .call("POST", format!("{inv}/reservations/{rsv}/confirm"), None, 200)
            .await?;

        // Token (refreshed every other round) and an in-limit charge.
        let token_body = driver
            .call("POST", format!("{pay}/tokens"), Some(json!({})), 201)
            .await?;
        let mut token = token_body["token"].as_str().unwrap_or_default().to_string();
        if round % 2 == 1 {
            let refreshed = driver
                .call("POST", format!("{pay}/tokens/{token}/refresh"), Some(json!({})), 201)
                .await?;
            token = refreshed["token"].as_str().unwrap_or_default().to_string();
        }
        let amount = two_decimals(rng.random_range(5.0..95.0));
        driver
            .call(
                "POST",
                format!("{pay}/charge"),
                Some(json!({"token": token, "amount": amount, "card_number": CARD})),
                200,
            )
            .await?;

        // Shipment plus a few polls.
        let shipment = driver
            .call(
                "POST",
                format!("{shp}/shipments"),
                Some(json!({"order_id": format!("wl-{round}")})),
                202,
            )
            .await?;
        let shipment_id = shipment["shipment_id"].as_str().unwrap_or_default();
        for _ in 0..(1 + round % 3) {
            driver
                .call("GET", format!("{shp}/shipments/{shipment_id}"), None, 200)
                .await?;
        }

        // One order through the saga.
        let order_amount = two_decimals(rng.random_range(5.0..95.0));
        driver
            .call(
                "POST",
                format!("{}/orders", targets.order),
                Some(json!({
                    "item_id": "item-002",
                    "quantity": 1,
                    "amount": order_amount,
                    "card_number": CARD,
                })),
                201,
            )
            .await?;
    }

    Ok(WorkloadReport {
        requests: driver.requests,
    })
}

/// Capture output: one trace file per dependency service.
#[derive(Debug, Clone)]
pub struct CapturePaths {
    pub inventory: PathBuf,
    pub payment: PathBuf,
    pub shipping: PathBuf,
}

/// Stands up the stack behind recording proxies, runs the workload through
/// them, and leaves per-service JSONL traces in `out_dir`. The order
/// service's own downstream calls go through the proxies too, so the traces
/// contain caller traffic, not just the synthetic browsing.
pub async fn capture_traces(
    rounds: u32,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<CapturePaths, WorkloadError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let paths = CapturePaths {
        inventory: out_dir.join("inventory.jsonl"),
        payment: out_dir.join("payment.jsonl"),
        shipping: out_dir.join("shipping.jsonl"),
    };
    for path in [&paths.inventory, &paths.payment, &paths.shipping] {
        if path.exists() {
            std::fs::remove_file(path)?;
        }
    }

    let inventory = crate::host::serve_router(super::inventory::router(), 0).await?;
    let payment =
        crate::host::serve_router(super::payment::router(Default::default()), 0).await?;
    let shipping =
        crate::host::serve_router(super::shipping::router(Default::default()), 0).await?;

    let inventory_proxy =
        serve_proxy(inventory.base_url(), "inventory", paths.inventory.clone(), 0).await?;
    let payment_proxy =
        serve_proxy(payment.base_url(), "payment", paths.payment.clone(), 0).await?;
    let shipping_proxy =
        serve_proxy(shipping.base_url(), "shipping", paths.shipping.clone(), 0).await?;

    let order = crate::host::serve_router(
        super::order::router(super::order::OrderConfig {
            inventory_base: inventory_proxy.base_url(),
            payment_base: payment_proxy.base_url(),
            shipping_base: shipping_proxy.base_url(),
        }),
        0,
    )
    .await?;

    let targets = WorkloadTargets {
        inventory: inventory_proxy.base_url(),
        payment: payment_proxy.base_url(),
        shipping: shipping_proxy.base_url(),
        order: order.base_url(),
    };
    let result = run_workload(&targets, rounds, seed).await;

    for handle in [
        order,
        shipping_proxy,
        payment_proxy,
        inventory_proxy,
        shipping,
        payment,
        inventory,
    ] {
        handle.shutdown().await;
    }
    result.map(|_| paths)
}

/// Test/CLI helper: the full stack plus proxies, already wired, for callers
/// that need the running services rather than just the files.
pub struct ProxiedStack {
    pub stack: DemoStack,
    pub inventory_proxy: ServerHandle,
    pub payment_proxy: ServerHandle,
    pub shipping_proxy: ServerHandle,
}

impl ProxiedStack {
    pub async fn shutdown(self) {
        self.inventory_proxy.shutdown().await;
        self.payment_proxy.shutdown().await;
        self.shipping_proxy.shutdown().await;
        self.stack.shutdown().await;
    }
}

/// Launches the stack with recording proxies in front of the dependencies
/// and the order service wired through them.
pub async fn launch_proxied(out_dir: impl AsRef<Path>) -> std::io::Result<ProxiedStack> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let inventory = crate::host::serve_router(super::inventory::router(), 0).await?;
    let payment =
        crate::host::serve_router(super::payment::router(Default::default()), 0).await?;
    let shipping =
        crate::host::serve_router(super::shipping::router(Default::default()), 0).await?;
    let inventory_proxy = serve_proxy(
        inventory.base_url(),
        "inventory",
        out_dir.join("inventory.jsonl"),
        0,
    )
    .await?;
    let payment_proxy = serve_proxy(
        payment.base_url(),
        "payment",
        out_dir.join("payment.jsonl"),
        0,
    )
    .await?;
    let shipping_proxy = serve_proxy(
        shipping.base_url(),
        "shipping",
        out_dir.join("shipping.jsonl"),
        0,
    )
    .await?;
    let order = crate::host::serve_router(
        super::order::router(super::order::OrderConfig {
            inventory_base: inventory_proxy.base_url(),
            payment_base: payment_proxy.base_url(),
            shipping_base: shipping_proxy.base_url(),
        }),
        0,
    )
    .await?;
    Ok(ProxiedStack {
        stack: DemoStack {
            inventory,
            payment,
            shipping,
            order,
        },
        inventory_proxy,
        payment_proxy,
        shipping_proxy,
    })
}
