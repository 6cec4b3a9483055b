//! Inventory service: items with stock counts under optimistic concurrency,
//! plus a reserve → confirm/release flow that the order saga drives.
//!
//! Behavior summary (see `docs/demo-services.md` for the full API):
//!
//! * Every successful mutation of an item bumps its `version`; reservations
//!   must quote the version they read and get `409 version conflict`
//!   (with `current_version`) when stale.
//! * Reserving more than the available stock is `409 insufficient stock`
//!   with the current `available` count.
//! * Releasing an active reservation restores stock (another version bump);
//!   confirming makes the consumption permanent.
//! * `GET /items` returns a bare array, or a `{items, next_offset}` page
//!   when `limit` is given.

use super::{api_error, count_api_traffic, json_response, no_content, RequestCounter};
use axum::extract::{Path, Query, State};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

#[derive(Clone)]
struct Item {
    stock: i64,
    version: i64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ReservationStatus {
    Active,
    Confirmed,
    Released,
}

#[derive(Clone)]
struct Reservation {
    item_id: String,
    quantity: i64,
    status: ReservationStatus,
}

struct Inventory {
    items: BTreeMap<String, Item>,
    reservations: BTreeMap<String, Reservation>,
    item_counter: u64,
    reservation_counter: u64,
}

impl Inventory {
    /// Seed catalog. `item-002` carries deep stock so long capture runs
    /// never drain it.
    fn seeded() -> Inventory {
        let mut items = BTreeMap::new();
        for (id, stock) in [("item-001", 5), ("item-002", 100), ("item-003", 25)] {
            items.insert(id.to_string(), Item { stock, version: 0 });
        }
        Inventory {
            items,
            reservations: BTreeMap::new(),
            // Minted ids continue above the seed range: item-101, item-102...
            item_counter: 100,
            reservation_counter: 0,
        }
    }

    fn item_json(&self, id: &str) -> Value {
        let item = &self.items[id];
        json!({"id": id, "stock": item.stock, "version": item.version})
    }
}

#[derive(Clone)]
struct AppState {
    inventory: Arc<Mutex<Inventory>>,
    counter: Arc<RequestCounter>,
}

fn int_field(body: &Value, field: &str) -> Option<i64> {
    body.get(field).and_then(Value::as_i64)
}

async fn list_items(State(state): State<AppState>, Query(params): Query<Vec<(String, String)>>) -> Response {
    let inventory = state.inventory.lock().expect("not poisoned");
    let all: Vec<Value> = inventory.items.keys().map(|id| inventory.item_json(id)).collect();

    let limit_param = params.iter().rev().find(|(k, _)| k == "limit").map(|(_, v)| v);
    let Some(limit_raw) = limit_param else {
        return json_response(200, Value::Array(all));
    };
    let Ok(limit) = limit_raw.parse::<i64>() else {
        return api_error(422, "invalid limit");
    };
    if limit < 1 {
        return api_error(422, "invalid limit");
    }
    let offset = match params.iter().rev().find(|(k, _)| k == "offset") {
        None => 0,
        Some((_, raw)) => match raw.parse::<i64>() {
            Ok(o) if o >= 0 => o,
            _ => return api_error(422, "invalid offset"),
        },
    };
    let start = (offset as usize).min(all.len());
    let end = (start + limit as usize).min(all.len());
    let next_offset = if end < all.len() {
        Value::from(end as i64)
    } else {
        Value::Null
    };
    json_response(
        200,
        json!({"items": Value::Array(all[start..end].to_vec()), "next_offset": next_offset}),
    )
}

async fn create_item(State(state): State<AppState>, body: Option<axum::Json<Value>>) -> Response {
    let body = body.map(|axum::Json(v)| v).unwrap_or(Value::Null);
    let Some(stock) = int_field(&body, "stock").filter(|s| *s >= 0) else {
        return api_error(422, "invalid stock");
    };
    let mut inventory = state.inventory.lock().expect("not poisoned");
    inventory.item_counter += 1;
    let id = format!("item-{}", inventory.item_counter);
    inventory.items.insert(id.clone(), Item { stock, version: 0 });
    json_response(201, inventory.item_json(&id))
}

async fn get_item(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let inventory = state.inventory.lock().expect("not poisoned");
    if inventory.items.contains_key(&id) {
        json_response(200, inventory.item_json(&id))
    } else {
        api_error(404, "item not found")
    }
}

async fn delete_item(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let mut inventory = state.inventory.lock().expect("not poisoned");
    if inventory.items.remove(&id).is_some() {
        no_content()
    } else {
        api_error(404, "item not found")
    }
}

async fn reserve(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Option<axum::Json<Value>>,
) -> Response {
    let body = body.map(|axum::Json(v)| v).unwrap_or(Value::Null);
    let mut inventory = state.inventory.lock().expect("not poisoned");
    let Some(item) = inventory.items.get(&id).cloned() else {
        return api_error(404, "item not found");
    };
    let Some(quantity) = int_field(&body, "quantity").filter(|q| *q >= 1) else {
        return api_error(422, "invalid quantity");
    };
    let Some(version) = int_field(&body, "version").filter(|v| *v >= 0) else {
        return api_error(422, "invalid version");
    };
    if version != item.version {
        return json_response(
            409,
            json!({"error": "version conflict", "current_version": item.version}),
        );
    }
    if quantity > item.stock {
        return json_response(
            409,
            json!({"error": "insufficient stock", "available": item.stock}),
        );
    }
    let entry = inventory.items.get_mut(&id).expect("checked above");
    entry.stock -= quantity;
    entry.version += 1;
    let new_version = entry.version;
    inventory.reservation_counter += 1;
    let reservation_id = format!("rsv-{}", inventory.reservation_counter);
    inventory.reservations.insert(
        reservation_id.clone(),
        Reservation {
            item_id: id,
            quantity,
            status: ReservationStatus::Active,
        },
    );
    json_response(
        201,
        json!({"reservation_id": reservation_id, "version": new_version}),
    )
}

async fn confirm(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let mut inventory = state.inventory.lock().expect("not poisoned");
    let Some(reservation) = inventory.reservations.get_mut(&id) else {
        return api_error(404, "reservation not found");
    };
    match reservation.status {
        ReservationStatus::Confirmed => api_error(409, "reservation already confirmed"),
        ReservationStatus::Released => api_error(409, "reservation released"),
        ReservationStatus::Active => {
            reservation.status = ReservationStatus::Confirmed;
            json_response(200, json!({"reservation_id": id, "status": "confirmed"}))
        }
    }
}

async fn release(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let mut inventory = state.inventory.lock().expect("not poisoned");
    let Some(reservation) = inventory.reservations.get(&id).cloned() else {
        return api_error(404, "reservation not found");
    };
    match reservation.status {
        ReservationStatus::Confirmed => api_error(409, "reservation confirmed"),
        ReservationStatus::Released => api_error(409, "reservation already released"),
        ReservationStatus::Active => {
            inventory
                .reservations
                .get_mut(&id)
                .expect("checked above")
                .status = ReservationStatus::Released;
            // Stock comes back; the item may have been deleted meanwhile.
            if let Some(item) = inventory.items.get_mut(&reservation.item_id) {
                item.stock += reservation.quantity;
                item.version += 1;
            }
            json_response(200, json!({"reservation_id": id, "status": "released"}))
        }
    }
}

async fn admin_reset(State(state): State<AppState>) -> Response {
    *state.inventory.lock().expect("not poisoned") = Inventory::seeded();
    state.counter.reset();
    no_content()
}

async fn admin_stats(State(state): State<AppState>) -> Response {
    json_response(200, json!({"requests": state.counter.count()}))
}

async fn mock_scenario() -> Response {
    no_content()
}

pub fn router() -> Router {
    let state = AppState {
        inventory: Arc::new(Mutex::new(Inventory::seeded())),
        counter: Arc::new(RequestCounter::default()),
    };
    Router::new()
        .route("/items", get(list_items).post(create_item))
        .route("/items/{id}", get(get_item).delete(delete_item))
        .route("/items/{id}/reserve", post(reserve))
        .route("/reservations/{id}/confirm", post(confirm))
        .route("/reservations/{id}/release", post(release))
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
