//! Order service: the caller of the other three. Placing an order runs a
//! saga — check item, reserve stock, get a charge token, charge, create a
//! shipment, confirm the reservation — and failures after the reservation
//! compensate by releasing it (restoring stock).
//!
//! Validation happens before any downstream call, so a bad request leaves
//! the dependencies untouched. A payment *decline* (a 200 from the payment
//! service with `authorised: false`) and a payment *rejection* (a 400) both
//! fail the order with a 422, but with different error messages — the saga
//! reads the charge body, not just its status.

use super::{api_error, count_api_traffic, json_response, no_content, RequestCounter};
use axum::extract::{Path, State};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone)]
pub struct OrderConfig {
    pub inventory_base: String,
    pub payment_base: String,
    pub shipping_base: String,
}

#[derive(Clone)]
struct OrderRecord {
    status: String,
    steps: Vec<String>,
    compensation: Vec<String>,
}

struct Orders {
    orders: BTreeMap<String, OrderRecord>,
    counter: u64,
}

#[derive(Clone)]
struct AppState {
    orders: Arc<Mutex<Orders>>,
    counter: Arc<RequestCounter>,
    config: Arc<OrderConfig>,
    http: reqwest::Client,
}

/// A downstream's answer: status plus parsed JSON body (null when none).
async fn downstream(
    http: &reqwest::Client,
    method: &str,
    url: String,
    body: Option<Value>,
) -> Result<(u16, Value), ()> {
    let mut rb = match method {
        "GET" => http.get(url),
        _ => http.post(url),
    };
    if let Some(b) = body {
        rb = rb.json(&b);
    }
    let res = rb.send().await.map_err(|_| ())?;
    let status = res.status().as_u16();
    let value = res.json::<Value>().await.unwrap_or(Value::Null);
    Ok((status, value))
}

struct Saga<'a> {
    state: &'a AppState,
    order_id: String,
    steps: Vec<String>,
    compensation: Vec<String>,
    reservation_id: Option<String>,
}

impl Saga<'_> {
    fn record(self, status: &str) {
        let mut orders = self.state.orders.lock().expect("not poisoned");
        orders.orders.insert(
            self.order_id,
            OrderRecord {
                status: status.to_string(),
                steps: self.steps,
                compensation: self.compensation,
            },
        );
    }

    /// Releases the reservation, if one was made, restoring stock.
    async fn compensate(&mut self) {
        let Some(rsv) = &self.reservation_id else {
            return;
        };
        let url = format!(
            "{}/reservations/{rsv}/release",
            self.state.config.inventory_base
        );
        let entry = match downstream(&self.state.http, "POST", url, None).await {
            Ok((200, _)) => "reservation_released",
            _ => "release_failed",
        };
        self.compensation.push(entry.to_string());
    }

    fn fail(self, status: &str, response: Response) -> Response {
        self.record(status);
        response
    }
}

async fn place_order(State(state): State<AppState>, body: Option<axum::Json<Value>>) -> Response {
    let body = body.map(|axum::Json(v)| v).unwrap_or(Value::Null);

    // All validation happens before the first downstream call.
    let Some(quantity) = body.get("quantity").and_then(Value::as_i64).filter(|q| *q >= 1)
    else {
        return api_error(422, "invalid quantity");
    };
    let item_id = body.get("item_id").and_then(Value::as_str).unwrap_or_default();
    let amount = body.get("amount").and_then(Value::as_f64).unwrap_or(0.0);
    let card = body.get("card_number").and_then(Value::as_str).unwrap_or_default();
    if item_id.is_empty() || amount <= 0.0 || card.is_empty() {
        return api_error(422, "invalid order request");
    }

    let order_id = {
        let mut orders = state.orders.lock().expect("not poisoned");
        orders.counter += 1;
        format!("ord-{}", orders.counter)
    };
    let mut saga = Saga {
        state: &state,
        order_id: order_id.clone(),
        steps: Vec::new(),
        compensation: Vec::new(),
        reservation_id: None,
    };
    let inventory = &state.config.inventory_base;

    // 1. The item must exist; its version anchors the reservation.
    let item = match downstream(&state.http, "GET", format!("{inventory}/items/{item_id}"), None).await
    {
        Ok((200, item)) => item,
        Ok((404, _)) => return saga.fail("failed_item_missing", api_error(404, "item not found")),
        _ => return saga.fail("failed_upstream", api_error(502, "inventory unreachable")),
    };
    saga.steps.push("item_checked".to_string());

    // 2. Reserve at the version just read.
    let reserve_body = json!({"quantity": quantity, "version": item["version"]});
    let reservation = match downstream(
        &state.http,
        "POST",
        format!("{inventory}/items/{item_id}/reserve"),
        Some(reserve_body),
    )
    .await
    {
        Ok((201, r)) => r,
        Ok((409, _)) => {
            return saga.fail(
                "failed_insufficient_stock",
                api_error(409, "insufficient stock"),
            )
        }
        _ => return saga.fail("failed_upstream", api_error(502, "reservation failed")),
    };
    let reservation_id = reservation["reservation_id"]
        .as_str()
        .unwrap_or_default()
        .to_string();
    saga.reservation_id = Some(reservation_id.clone());
    saga.steps.push("reserved".to_string());

    // 3. Charge token.
    let payment = &state.config.payment_base;
    let token = match downstream(&state.http, "POST", format!("{payment}/tokens"), Some(json!({})))
        .await
    {
        Ok((201, t)) => t["token"].as_str().unwrap_or_default().to_string(),
        _ => {
            saga.compensate().await;
            return saga.fail("failed_upstream", api_error(502, "payment unavailable"));
        }
    };
    saga.steps.push("token_issued".to_string());

    // 4. Charge. A decline arrives as a 200 — the body decides.
    let charge_body = json!({"token": token, "amount": body["amount"], "card_number": card});
    match downstream(&state.http, "POST", format!("{payment}/charge"), Some(charge_body)).await {
        Ok((200, outcome)) if outcome["authorised"] == json!(true) => {
            saga.steps.push("charged".to_string());
        }
        Ok((200, _)) => {
            saga.compensate().await;
            return saga.fail("failed_payment_declined", api_error(422, "payment declined"));
        }
        Ok((400, _)) => {
            saga.compensate().await;
            return saga.fail("failed_payment_rejected", api_error(422, "payment rejected"));
        }
        _ => {
            saga.compensate().await;
            return saga.fail("failed_upstream", api_error(502, "payment unavailable"));
        }
    }

    // 5. Shipment.
    let shipping = &state.config.shipping_base;
    let shipment = match downstream(
        &state.http,
        "POST",
        format!("{shipping}/shipments"),
        Some(json!({"order_id": order_id})),
    )
    .await
    {
        Ok((202, s)) => s["shipment_id"].as_str().unwrap_or_default().to_string(),
        _ => {
            saga.compensate().await;
            return saga.fail("failed_upstream", api_error(502, "shipping unavailable"));
        }
    };
    saga.steps.push("shipment_created".to_string());

    // 6. Make the stock consumption permanent. The shipment already exists,
    // so a failure here is reported, not compensated.
    match downstream(
        &state.http,
        "POST",
        format!("{inventory}/reservations/{reservation_id}/confirm"),
        None,
    )
    .await
    {
        Ok((200, _)) => saga.steps.push("reservation_confirmed".to_string()),
        _ => {
            return saga.fail(
                "failed_confirmation",
                api_error(502, "reservation confirmation failed"),
            )
        }
    }

    saga.record("confirmed");
    json_response(
        201,
        json!({
            "order_id": order_id,
            "status": "confirmed",
            "reservation_id": reservation_id,
            "shipment_id": shipment,
        }),
    )
}

async fn get_order(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let orders = state.orders.lock().expect("not poisoned");
    match orders.orders.get(&id) {
        Some(record) => json_response(
            200,
            json!({
                "order_id": id,
                "status": record.status,
                "steps": record.steps,
                "compensation": record.compensation,
            }),
        ),
        None => api_error(404, "order not found"),
    }
}

async fn admin_reset(State(state): State<AppState>) -> Response {
    {
        let mut orders = state.orders.lock().expect("not poisoned");
        orders.orders.clear();
        orders.counter = 0;
    }
    state.counter.reset();
    // Cascade to the dependencies so one reset restores the whole stack;
    // unreachable dependencies (already torn down, for instance) are fine.
    for base in [
        &state.config.inventory_base,
        &state.config.payment_base,
        &state.config.shipping_base,
    ] {
        let _ = state
            .http
            .post(format!("{base}/__admin__/reset"))
            .send()
            .await;
    }
    no_content()
}

async fn admin_stats(State(state): State<AppState>) -> Response {
    json_response(200, json!({"requests": state.counter.count()}))
}

async fn mock_scenario() -> Response {
    no_content()
}

pub fn router(config: OrderConfig) -> Router {
    let state = AppState {
        orders: Arc::new(Mutex::new(Orders {
            orders: BTreeMap::new(),
            counter: 0,
        })),
        counter: Arc::new(RequestCounter::default()),
        config: Arc::new(config),
        http: reqwest::Client::new(),
    };
    Router::new()
        .route("/orders", post(place_order))
        .route("/orders/{id}", get(get_order))
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
    use super::super::DemoStack;
    use serde_json::{json, Value};

    fn order_body(amount: f64) -> Value {
        json!({
            "item_id": "item-002",
            "quantity": 1,
            "amount": amount,
            "card_number": "4242424242424242",
        })
    }

    async fn place(client: &reqwest::Client, base: &str, body: Value) -> (u16, Value) {
        let res = client
            .post(format!("{base}/orders"))
            .json(&body)
            .send()
            .await
            .unwrap();
        let status = res.status().as_u16();
        (status, res.json::<Value>().await.unwrap_or(Value::Null))
    }

    async fn item_stock(client: &reqwest::Client, base: &str, id: &str) -> i64 {
        client
            .get(format!("{base}/items/{id}"))
            .send()
            .await
            .unwrap()
            .json::<Value>()
            .await
            .unwrap()["stock"]
            .as_i64()
            .unwrap()
    }

    #[tokio::test]
    async fn happy_path_confirms_and_records_all_steps() {
        let stack = DemoStack::launch_ephemeral().await.unwrap();
        let client = reqwest::Client::new();
        let base = stack.order.base_url();

        let (status, body) = place(&client, &base, order_body(25.0)).await;
        assert_eq!(status, 201);
        assert_eq!(
            body,
            json!({
                "order_id": "ord-1",
                "status": "confirmed",
                "reservation_id": "rsv-1",
                "shipment_id": "shp-1",
            })
        );
        assert_eq!(item_stock(&client, &stack.inventory.base_url(), "item-002").await, 99);

        let res = client
            .get(format!("{base}/orders/ord-1"))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status().as_u16(), 200);
        let record: Value = res.json().await.unwrap();
        assert_eq!(
            record,
            json!({
                "order_id": "ord-1",
                "status": "confirmed",
                "steps": [
                    "item_checked",
                    "reserved",
                    "token_issued",
                    "charged",
                    "shipment_created",
                    "reservation_confirmed",
                ],
                "compensation": [],
            })
        );

        let res = client
            .get(format!("{base}/orders/ord-9"))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status().as_u16(), 404);

        stack.shutdown().await;
    }

    #[tokio::test]
    async fn declined_payment_compensates_and_restores_stock() {
        let stack = DemoStack::launch_ephemeral().await.unwrap();
        let client = reqwest::Client::new();

        let (status, body) = place(&client, &stack.order.base_url(), order_body(150.0)).await;
        assert_eq!(status, 422);
        assert_eq!(body, json!({"error": "payment declined"}));
        // The reservation was released: full stock, but two version bumps.
        let inv = stack.inventory.base_url();
        assert_eq!(item_stock(&client, &inv, "item-002").await, 100);
        let item: Value = client
            .get(format!("{inv}/items/item-002"))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        assert_eq!(item["version"], json!(2));

        stack.shutdown().await;
    }

    #[tokio::test]
    async fn rejected_card_type_compensates_with_its_own_message() {
        let stack = DemoStack::launch_ephemeral().await.unwrap();
        let client = reqwest::Client::new();
        let mut body = order_body(25.0);
        body["card_number"] = json!("371449635398431");
        let (status, response) = place(&client, &stack.order.base_url(), body).await;
        assert_eq!(status, 422);
        assert_eq!(response, json!({"error": "payment rejected"}));
        assert_eq!(
            item_stock(&client, &stack.inventory.base_url(), "item-002").await,
            100
        );
        stack.shutdown().await;
    }

    #[tokio::test]
    async fn invalid_quantity_never_reaches_the_dependencies() {
        let stack = DemoStack::launch_ephemeral().await.unwrap();
        let client = reqwest::Client::new();
        let mut body = order_body(25.0);
        body["quantity"] = json!(0);
        let (status, response) = place(&client, &stack.order.base_url(), body).await;
        assert_eq!(status, 422);
        assert_eq!(response, json!({"error": "invalid quantity"}));

        let stats: Value = client
            .get(format!("{}/__admin__/stats", stack.inventory.base_url()))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        assert_eq!(stats, json!({"requests": 0}), "no downstream call was made");
        stack.shutdown().await;
    }

    #[tokio::test]
    async fn unknown_item_and_insufficient_stock_map_through() {
        let stack = DemoStack::launch_ephemeral().await.unwrap();
        let client = reqwest::Client::new();
        let base = stack.order.base_url();

        let mut body = order_body(25.0);
        body["item_id"] = json!("item-999");
        let (status, response) = place(&client, &base, body).await;
        assert_eq!(status, 404);
        assert_eq!(response, json!({"error": "item not found"}));

        let mut body = order_body(25.0);
        body["quantity"] = json!(9999);
        let (status, response) = place(&client, &base, body).await;
        assert_eq!(status, 409);
        assert_eq!(response, json!({"error": "insufficient stock"}));

        stack.shutdown().await;
    }

    #[tokio::test]
    async fn reset_cascades_to_the_dependencies() {
        let stack = DemoStack::launch_ephemeral().await.unwrap();
        let client = reqwest::Client::new();
        let base = stack.order.base_url();

        place(&client, &base, order_body(25.0)).await;
        assert_eq!(
            item_stock(&client, &stack.inventory.base_url(), "item-002").await,
            99
        );

        let res = client
            .post(format!("{base}/__admin__/reset"))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status().as_u16(), 204);
        assert_eq!(
            item_stock(&client, &stack.inventory.base_url(), "item-002").await,
            100,
            "inventory reseeded through the cascade"
        );
        let res = client.get(format!("{base}/orders/ord-1")).send().await.unwrap();
        assert_eq!(res.status().as_u16(), 404);

        // Ids restart after reset, so runs are reproducible.
        let (_, body) = place(&client, &base, order_body(25.0)).await;
        assert_eq!(body["order_id"], json!("ord-1"));
        assert_eq!(body["reservation_id"], json!("rsv-1"));

        stack.shutdown().await;
    }
}
