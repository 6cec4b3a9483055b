//! Record/replay engine: serves responses straight out of a trace store
//! using tiered request matching.
//!
//! Matching tiers, tried in order:
//!  1. exact — method + concrete path + canonicalized body
//!  2. path — method + concrete path, body ignored
//!  3. pattern — method + normalized path
//!
//! Within a tier, recorded responses are grouped by status code and the
//! winning group is the most frequent; ties break to the most recently
//! captured, then to the lowest status code. The selected group answers
//! with its most recent recorded response. A request no tier can answer
//! gets `501 {"error": "no recorded interaction"}`.

use crate::json::canonical;
use crate::response::MockResponse;
use crate::trace::{HttpRequestRecord, HttpResponseRecord, PathNormalizer, TraceStore};
use std::collections::BTreeMap;

/// Recorded responses for one status code under one match key.
#[derive(Debug, Clone)]
struct StatusGroup {
    status: u16,
    count: usize,
    /// Timestamp of the newest member, used for tie-breaks and for picking
    /// the representative response.
    last_seen: u64,
    /// File order of the newest member, breaking timestamp ties.
    last_order: usize,
    representative: HttpResponseRecord,
}

fn upsert(
    groups: &mut Vec<StatusGroup>,
    status: u16,
    timestamp: u64,
    order: usize,
    response: &HttpResponseRecord,
) {
    match groups.iter_mut().find(|g| g.status == status) {
        Some(g) => {
            g.count += 1;
            if (timestamp, order) >= (g.last_seen, g.last_order) {
                g.last_seen = timestamp;
                g.last_order = order;
                g.representative = response.clone();
            }
        }
        None => groups.push(StatusGroup {
            status,
            count: 1,
            last_seen: timestamp,
            last_order: order,
            representative: response.clone(),
        }),
    }
}

fn pick(groups: &[StatusGroup]) -> &StatusGroup {
    groups
        .iter()
        .max_by(|a, b| {
            a.count
                .cmp(&b.count)
                .then_with(|| a.last_seen.cmp(&b.last_seen))
                // Lower status wins the remaining tie, so compare reversed.
                .then_with(|| b.status.cmp(&a.status))
        })
        .expect("groups are non-empty")
}

type Key = (String, String);

/// Prebuilt lookup structure over a trace store.
#[derive(Debug, Clone)]
pub struct ReplayIndex {
    /// Tier 1: (method, path + canonical body) — the body is folded into
    /// the second key component.
    exact: BTreeMap<Key, Vec<StatusGroup>>,
    /// Tier 2: (method, concrete path).
    by_path: BTreeMap<Key, Vec<StatusGroup>>,
    /// Tier 3: (method, normalized path).
    by_pattern: BTreeMap<Key, Vec<StatusGroup>>,
    normalizer: PathNormalizer,
}

fn exact_key(method: &str, path: &str, body: Option<&serde_json::Value>) -> Key {
    let body_part = body.map(canonical).unwrap_or_default();
    (method.to_string(), format!("{path}\n{body_part}"))
}

/// Builds the three-tier index from a store. The store's own normalizer is
/// reused so replay groups paths exactly as the store does.
pub fn build_index(store: &TraceStore) -> ReplayIndex {
    let mut exact: BTreeMap<Key, Vec<StatusGroup>> = BTreeMap::new();
    let mut by_path: BTreeMap<Key, Vec<StatusGroup>> = BTreeMap::new();
    let mut by_pattern: BTreeMap<Key, Vec<StatusGroup>> = BTreeMap::new();
    let normalizer = store.normalizer().clone();

    for (order, inter) in store.interactions().iter().enumerate() {
        let req = &inter.request;
        let resp = &inter.response;
        let ts = inter.timestamp;

        let k1 = exact_key(&req.method, &req.path, req.body.as_ref());
        upsert(exact.entry(k1).or_default(), resp.status, ts, order, resp);

        let k2 = (req.method.clone(), req.path.clone());
        upsert(by_path.entry(k2).or_default(), resp.status, ts, order, resp);

        let k3 = (req.method.clone(), normalizer.normalize(&req.path));
        upsert(by_pattern.entry(k3).or_default(), resp.status, ts, order, resp);
    }

    ReplayIndex {
        exact,
        by_path,
        by_pattern,
        normalizer,
    }
}

impl ReplayIndex {
    /// Answers one request from the recorded traffic, or reports a miss as
    /// `501 {"error": "no recorded interaction"}`.
    pub fn respond(&self, request: &HttpRequestRecord) -> MockResponse {
        let tiers: [Option<&Vec<StatusGroup>>; 3] = [
            self.exact.get(&exact_key(
                &request.method,
                &request.path,
                request.body.as_ref(),
            )),
            self.by_path
                .get(&(request.method.clone(), request.path.clone())),
            self.by_pattern.get(&(
                request.method.clone(),
                self.normalizer.normalize(&request.path),
            )),
        ];
        for groups in tiers.into_iter().flatten() {
            let g = pick(groups);
            return MockResponse {
                status: g.status,
                body: g.representative.body.clone(),
                headers: g.representative.headers.clone(),
            };
        }
        MockResponse::error(501, "no recorded interaction")
    }
}
