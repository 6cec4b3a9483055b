//! Pattern-mining engine: distills captured traffic into a static rule set
//! plus entity lifecycles, then serves requests from those rules with a
//! small runtime state machine.
//!
//! Mining recognizes one structural idiom: a `POST` to a collection whose
//! response body carries an id that later appears as the final segment of a
//! sibling `/{id}` pattern. Such endpoints become [`EntityLifecycle`] rules
//! with create/read/update/delete phases; every other endpoint becomes a
//! [`StaticRule`] answering with its modal recorded response.

use crate::response::MockResponse;
use crate::trace::{HttpRequestRecord, PathNormalizer, TraceError, TraceStore};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Placeholder used inside mined body templates where an entity id appeared.
pub const ID_PLACEHOLDER: &str = "__id__";

/// Prefix of ids a serving session mints for created entities.
pub const ID_PREFIX: &str = "gen";

// ============================================================================
// Mined model (serializable)
// ============================================================================

/// Response rule for one lifecycle phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRule {
    pub method: String,
    pub status: u16,
    /// Body template with [`ID_PLACEHOLDER`] standing in for the entity id;
    /// `None` when the modal recorded response had no body.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_template: Option<Value>,
}

/// Create rule: which collection `POST` mints this entity and how the
/// response is shaped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateRule {
    pub method: String,
    pub status: u16,
    /// Top-level response-body field that carried the minted id.
    pub id_field: String,
    pub body_template: Value,
}

/// Mined lifecycle for one `/{id}`-shaped endpoint family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityLifecycle {
    /// Normalized entity pattern, e.g. `/items/{id}`.
    pub pattern: String,
    /// Parent collection path, e.g. `/items`.
    pub collection: String,
    pub create: CreateRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub read: Option<PhaseRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update: Option<PhaseRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delete: Option<PhaseRule>,
    /// Status served for ids that are absent or deleted; observed in traces
    /// when possible, 404 otherwise.
    pub not_found_status: u16,
    pub not_found_body: Value,
}

/// Modal response for an endpoint with no mined lifecycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticRule {
    pub method: String,
    /// Normalized path pattern.
    pub pattern: String,
    pub status: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<Value>,
}

/// The full mined model. Serializes to a standalone JSON document; runtime
/// state lives in [`MinerSession`], not here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedModel {
    /// Custom id patterns the source store was normalized with, kept so a
    /// session can classify request paths the same way.
    #[serde(default)]
    pub id_patterns: Vec<String>,
    #[serde(default)]
    pub entities: Vec<EntityLifecycle>,
    #[serde(default)]
    pub static_rules: Vec<StaticRule>,
}

impl MinedModel {
    /// Starts a serving session with empty runtime state. The session's
    /// normalizer also recognizes the ids it mints itself, so follow-up
    /// requests against a minted resource route back to its lifecycle.
    pub fn session(&self) -> Result<MinerSession, TraceError> {
        let minted = format!("{}-[0-9]+", regex::escape(ID_PREFIX));
        let mut patterns = self.id_patterns.clone();
        if !patterns.contains(&minted) {
            patterns.push(minted);
        }
        Ok(MinerSession {
            model: self.clone(),
            normalizer: PathNormalizer::with_patterns(&patterns)?,
            phases: BTreeMap::new(),
            counter: 0,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let text = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path.as_ref(), text).map_err(|e| TraceError::Io {
            path: path.as_ref().display().to_string(),
            source: e,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MinedModel, TraceError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| TraceError::Io {
            path: path.as_ref().display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| TraceError::Line {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

// ============================================================================
// Mining
// ============================================================================

/// Picks the modal member from `(key, timestamp, order)` observations:
/// highest count, then most recent, then smallest key.
fn modal<K: Ord + Clone>(observations: &[(K, u64, usize)]) -> Option<K> {
    let mut groups: BTreeMap<K, (usize, u64, usize)> = BTreeMap::new();
    for (k, ts, ord) in observations {
        let entry = groups.entry(k.clone()).or_insert((0, 0, 0));
        entry.0 += 1;
        if (*ts, *ord) >= (entry.1, entry.2) {
            entry.1 = *ts;
            entry.2 = *ord;
        }
    }
    groups
        .into_iter()
        // Reverse the key ordering inside the comparison so the smallest
        // key wins ties; count and recency still dominate.
        .max_by(|(ka, (ca, ta, oa)), (kb, (cb, tb, ob))| {
            ca.cmp(cb)
                .then_with(|| (ta, oa).cmp(&(tb, ob)))
                .then_with(|| kb.cmp(ka))
        })
        .map(|(k, _)| k)
}

/// Replaces string values equal to `id` with the placeholder.
fn placeholderize(body: &Value, id: &str) -> Value {
    match body {
        Value::String(s) if s == id => Value::String(ID_PLACEHOLDER.to_string()),
        Value::Array(items) => Value::Array(items.iter().map(|v| placeholderize(v, id)).collect()),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), placeholderize(v, id)))
                .collect(),
        ),
        other => other.clone(),
    }
}

/// Replaces the placeholder with a concrete id in all string values.
fn interpolate(template: &Value, id: &str) -> Value {
    match template {
        Value::String(s) if s.contains(ID_PLACEHOLDER) => {
            Value::String(s.replace(ID_PLACEHOLDER, id))
        }
        Value::Array(items) => Value::Array(items.iter().map(|v| interpolate(v, id)).collect()),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), interpolate(v, id)))
                .collect(),
        ),
        other => other.clone(),
    }
}

fn last_segment(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or("")
}

/// Observations for one endpoint: `(index order, timestamp, status,
/// request path, response body)`.
struct Obs<'a> {
    order: usize,
    timestamp: u64,
    status: u16,
    path: &'a str,
    body: Option<&'a Value>,
}

/// Modal status across observations, then the modal body *within* that
/// status (templated through `template_id` when provided).
fn modal_response(observations: &[Obs<'_>], template: bool) -> Option<(u16, Option<Value>)> {
    if observations.is_empty() {
        return None;
    }
    let status_obs: Vec<(u16, u64, usize)> = observations
        .iter()
        .map(|o| (o.status, o.timestamp, o.order))
        .collect();
    let status = modal(&status_obs).expect("non-empty");

    let mut body_obs: Vec<(String, u64, usize)> = Vec::new();
    let mut bodies: BTreeMap<String, Option<Value>> = BTreeMap::new();
    for o in observations.iter().filter(|o| o.status == status) {
        let templated = match o.body {
            Some(b) if template => Some(placeholderize(b, last_segment(o.path))),
            Some(b) => Some(b.clone()),
            None => None,
        };
        let key = templated
            .as_ref()
            .map(crate::json::canonical)
            .unwrap_or_default();
        bodies.entry(key.clone()).or_insert(templated);
        body_obs.push((key, o.timestamp, o.order));
    }
    let body_key = modal(&body_obs).expect("non-empty");
    Some((status, bodies.remove(&body_key).expect("key present")))
}

/// Mines a model from a trace store. Deterministic: the same store always
/// produces the same model.
pub fn mine(store: &TraceStore) -> MinedModel {
    let index = store.endpoint_index();
    let interactions = store.interactions();

    let collect = |key: &(String, String)| -> Vec<Obs<'_>> {
        index
            .get(key)
            .map(|idxs| {
                idxs.iter()
                    .map(|&i| {
                        let inter = &interactions[i];
                        Obs {
                            order: i,
                            timestamp: inter.timestamp,
                            status: inter.response.status,
                            path: &inter.request.path,
                            body: inter.response.body.as_ref(),
                        }
                    })
                    .collect()
            })
            .unwrap_or_default()
    };

    // All (method, pattern) keys, plus every pattern seen.
    let patterns: BTreeSet<&String> = index.keys().map(|(_, p)| p).collect();

    let mut entities = Vec::new();
    let mut consumed: BTreeSet<(String, String)> = BTreeSet::new();

    for pattern in &patterns {
        let Some(collection) = pattern.strip_suffix("/{id}") else {
            continue;
        };
        if collection.is_empty() {
            continue;
        }
        let create_key = ("POST".to_string(), collection.to_string());
        let creates: Vec<usize> = index.get(&create_key).cloned().unwrap_or_default();

        // Concrete ids that later appear as the final segment of this
        // pattern's paths, across all methods.
        let mut ids_on_pattern: BTreeSet<&str> = BTreeSet::new();
        for (key, idxs) in index.iter() {
            if &key.1 == *pattern {
                for &i in idxs {
                    ids_on_pattern.insert(last_segment(&interactions[i].request.path));
                }
            }
        }

        // Which top-level response field carried those ids?
        let mut field_hits: BTreeMap<&str, usize> = BTreeMap::new();
        for &c in &creates {
            let inter = &interactions[c];
            if !(200..300).contains(&inter.response.status) {
                continue;
            }
            if let Some(Value::Object(map)) = &inter.response.body {
                for (k, v) in map {
                    if let Value::String(s) = v {
                        if ids_on_pattern.contains(s.as_str()) {
                            *field_hits.entry(k.as_str()).or_default() += 1;
                        }
                    }
                }
            }
        }
        let Some((&id_field, _)) = field_hits
            .iter()
            .max_by(|(ka, ca), (kb, cb)| ca.cmp(cb).then_with(|| kb.cmp(ka)))
        else {
            continue;
        };

        // Template the creates through the id carried in `id_field`.
        let create_obs: Vec<(String, u64, usize)> = creates
            .iter()
            .filter_map(|&c| {
                let inter = &interactions[c];
                if !(200..300).contains(&inter.response.status) {
                    return None;
                }
                let body = inter.response.body.as_ref()?;
                let id = body.get(id_field)?.as_str()?;
                let templated = placeholderize(body, id);
                Some((
                    format!("{}\n{}", inter.response.status, crate::json::canonical(&templated)),
                    inter.timestamp,
                    c,
                ))
            })
            .collect();
        if create_obs.is_empty() {
            continue;
        }
        let winner = modal(&create_obs).expect("non-empty");
        let (status_text, body_text) = winner.split_once('\n').expect("key has two parts");
        let create = CreateRule {
            method: "POST".to_string(),
            status: status_text.parse().expect("status formatted from u16"),
            id_field: id_field.to_string(),
            body_template: serde_json::from_str(body_text).expect("canonical body parses"),
        };

        let phase_rule = |method: &str| -> Option<PhaseRule> {
            let obs = collect(&(method.to_string(), (*pattern).clone()));
            let ok: Vec<Obs<'_>> = obs
                .into_iter()
                .filter(|o| (200..300).contains(&o.status))
                .collect();
            modal_response(&ok, true).map(|(status, body_template)| PhaseRule {
                method: method.to_string(),
                status,
                body_template,
            })
        };
        let read = phase_rule("GET");
        let update = phase_rule("PUT").or_else(|| phase_rule("PATCH"));
        let delete = phase_rule("DELETE");

        // Error behavior observed on the pattern itself.
        let mut error_obs: Vec<Obs<'_>> = Vec::new();
        for (key, _) in index.iter().filter(|(k, _)| &k.1 == *pattern) {
            error_obs.extend(collect(key).into_iter().filter(|o| o.status >= 400));
        }
        let (not_found_status, not_found_body) = match modal_response(&error_obs, false) {
            Some((status, body)) => (
                status,
                body.unwrap_or_else(|| serde_json::json!({"error": "not found"})),
            ),
            None => (404, serde_json::json!({"error": "not found"})),
        };

        // Claim this family's endpoints so they do not also become static
        // rules. Note: a consumed collection POST keeps only its lifecycle
        // behavior; rare non-2xx creates are not preserved.
        consumed.insert(create_key);
        for (key, _) in index.iter() {
            if &key.1 == *pattern {
                consumed.insert(key.clone());
            }
        }

        entities.push(EntityLifecycle {
            pattern: (*pattern).clone(),
            collection: collection.to_string(),
            create,
            read,
            update,
            delete,
            not_found_status,
            not_found_body,
        });
    }

    let mut static_rules = Vec::new();
    for key in index.keys() {
        if consumed.contains(key) {
            continue;
        }
        let obs = collect(key);
        if let Some((status, body)) = modal_response(&obs, false) {
            static_rules.push(StaticRule {
                method: key.0.clone(),
                pattern: key.1.clone(),
                status,
                body,
            });
        }
    }

    entities.sort_by(|a, b| a.pattern.cmp(&b.pattern));
    static_rules.sort_by(|a, b| a.pattern.cmp(&b.pattern).then_with(|| a.method.cmp(&b.method)));

    MinedModel {
        id_patterns: store.normalizer().patterns().to_vec(),
        entities,
        static_rules,
    }
}

// ============================================================================
// Serving
// ============================================================================

/// Lifecycle phase of a runtime entity id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Live,
    Deleted,
}

/// A serving session over a mined model: the model's rules plus the mutable
/// entity-phase map and id counter.
#[derive(Debug, Clone)]
pub struct MinerSession {
    model: MinedModel,
    normalizer: PathNormalizer,
    phases: BTreeMap<String, Phase>,
    counter: u64,
}

impl MinerSession {
    pub fn model(&self) -> &MinedModel {
        &self.model
    }

    /// Clears runtime state; the next create mints `gen-1` again.
    pub fn reset(&mut self) {
        self.phases.clear();
        self.counter = 0;
    }

    /// Answers one request from the mined rules: lifecycle create, then
    /// lifecycle entity phases, then static rules, then a 501 miss.
    pub fn serve(&mut self, request: &HttpRequestRecord) -> MockResponse {
        let pattern = self.normalizer.normalize(&request.path);

        for lc in &self.model.entities {
            if request.method == lc.create.method && pattern == lc.collection {
                self.counter += 1;
                let id = format!("{ID_PREFIX}-{}", self.counter);
                self.phases.insert(id.clone(), Phase::Live);
                return MockResponse::json(
                    lc.create.status,
                    interpolate(&lc.create.body_template, &id),
                );
            }
        }

        for lc in &self.model.entities {
            if pattern != lc.pattern {
                continue;
            }
            let id = last_segment(&request.path);
            let not_found = || MockResponse {
                status: lc.not_found_status,
                body: Some(lc.not_found_body.clone()),
                headers: BTreeMap::new(),
            };
            match self.phases.get(id) {
                None | Some(Phase::Deleted) => return not_found(),
                Some(Phase::Live) => {
                    let rule = [&lc.read, &lc.update, &lc.delete]
                        .into_iter()
                        .flatten()
                        .find(|r| r.method == request.method);
                    if let Some(rule) = rule {
                        let response = MockResponse {
                            status: rule.status,
                            body: rule
                                .body_template
                                .as_ref()
                                .map(|t| interpolate(t, id)),
                            headers: BTreeMap::new(),
                        };
                        if request.method == "DELETE" {
                            self.phases.insert(id.to_string(), Phase::Deleted);
                        }
                        return response;
                    }
                    // No phase rule for this method; fall to static rules.
                }
            }
        }

        for rule in &self.model.static_rules {
            if rule.method == request.method && rule.pattern == pattern {
                return MockResponse {
                    status: rule.status,
                    body: rule.body.clone(),
                    headers: BTreeMap::new(),
                };
            }
        }

        MockResponse::error(501, "no mined rule")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{HttpResponseRecord, Interaction};
    use proptest::prelude::*;
    use serde_json::json;

    fn inter(
        method: &str,
        path: &str,
        body: Option<Value>,
        status: u16,
        response_body: Option<Value>,
        timestamp: u64,
    ) -> Interaction {
        Interaction {
            request: match body {
                Some(b) => HttpRequestRecord::with_body(method, path, b),
                None => HttpRequestRecord::simple(method, path),
            },
            response: HttpResponseRecord::new(status, response_body),
            service: "inventory".to_string(),
            timestamp,
            session: None,
        }
    }

    fn demo_store() -> TraceStore {
        let interactions = vec![
            // Two create/read/delete rounds minting item ids.
            inter(
                "POST", "/items", Some(json!({"stock": 5})),
                201, Some(json!({"id": "item-101", "stock": 5, "version": 0})), 1,
            ),
            inter(
                "GET", "/items/item-101", None,
                200, Some(json!({"id": "item-101", "stock": 5, "version": 0})), 2,
            ),
            inter("DELETE", "/items/item-101", None, 204, None, 3),
            inter(
                "POST", "/items", Some(json!({"stock": 9})),
                201, Some(json!({"id": "item-102", "stock": 9, "version": 0})), 4,
            ),
            inter(
                "GET", "/items/item-102", None,
                200, Some(json!({"id": "item-102", "stock": 9, "version": 0})), 5,
            ),
            inter("DELETE", "/items/item-102", None, 204, None, 6),
            // Reservation flow on a seeded item.
            inter(
                "POST", "/items/item-001/reserve", Some(json!({"quantity": 1, "version": 0})),
                201, Some(json!({"reservation_id": "rsv-1", "version": 1})), 7,
            ),
            inter(
                "POST", "/reservations/rsv-1/confirm", None,
                200, Some(json!({"reservation_id": "rsv-1", "status": "confirmed"})), 8,
            ),
            // Collection listing.
            inter("GET", "/items", None, 200, Some(json!([{"id": "item-001"}])), 9),
        ];
        TraceStore::from_interactions(
            interactions,
            PathNormalizer::with_patterns(&["item-[0-9]+", "rsv-[0-9]+"]).unwrap(),
        )
    }

    #[test]
    fn mines_lifecycle_from_create_then_use() {
        let model = mine(&demo_store());
        assert_eq!(model.entities.len(), 1);
        let lc = &model.entities[0];
        assert_eq!(lc.pattern, "/items/{id}");
        assert_eq!(lc.collection, "/items");
        assert_eq!(lc.create.status, 201);
        assert_eq!(lc.create.id_field, "id");
        assert_eq!(
            lc.create.body_template,
            json!({"id": ID_PLACEHOLDER, "stock": 9, "version": 0})
        );
        let read = lc.read.as_ref().unwrap();
        assert_eq!(read.status, 200);
        assert_eq!(
            read.body_template.as_ref().unwrap(),
            &json!({"id": ID_PLACEHOLDER, "stock": 9, "version": 0})
        );
        let delete = lc.delete.as_ref().unwrap();
        assert_eq!(delete.status, 204);
        assert_eq!(delete.body_template, None);
        assert!(lc.update.is_none());
        // No errors recorded on the pattern: the defaults stand in.
        assert_eq!(lc.not_found_status, 404);
        assert_eq!(lc.not_found_body, json!({"error": "not found"}));
    }

    #[test]
    fn unconsumed_endpoints_become_static_rules() {
        let model = mine(&demo_store());
        let keys: Vec<(&str, &str)> = model
            .static_rules
            .iter()
            .map(|r| (r.method.as_str(), r.pattern.as_str()))
            .collect();
        assert_eq!(
            keys,
            vec![
                ("GET", "/items"),
                ("POST", "/items/{id}/reserve"),
                ("POST", "/reservations/{id}/confirm"),
            ]
        );
        let reserve = &model.static_rules[1];
        assert_eq!(reserve.status, 201);
        assert_eq!(
            reserve.body.as_ref().unwrap(),
            &json!({"reservation_id": "rsv-1", "version": 1})
        );
    }

    #[test]
    fn serve_walks_the_lifecycle() {
        let model = mine(&demo_store());
        let mut session = model.session().unwrap();

        let create = session.serve(&HttpRequestRecord::with_body(
            "POST", "/items", json!({"stock": 3}),
        ));
        assert_eq!(create.status, 201);
        assert_eq!(
            create.body.unwrap(),
            json!({"id": "gen-1", "stock": 9, "version": 0})
        );

        let read = session.serve(&HttpRequestRecord::simple("GET", "/items/gen-1"));
        assert_eq!(read.status, 200);
        assert_eq!(read.body.unwrap()["id"], json!("gen-1"));

        let del = session.serve(&HttpRequestRecord::simple("DELETE", "/items/gen-1"));
        assert_eq!(del.status, 204);
        assert_eq!(del.body, None);

        let after = session.serve(&HttpRequestRecord::simple("GET", "/items/gen-1"));
        assert_eq!(after.status, 404);
        assert_eq!(after.body.unwrap(), json!({"error": "not found"}));

        // Unseen ids look exactly like deleted ones.
        let unseen = session.serve(&HttpRequestRecord::simple("GET", "/items/gen-77"));
        assert_eq!(unseen.status, 404);
    }

    #[test]
    fn minted_ids_count_up_and_reset_restarts() {
        let model = mine(&demo_store());
        let mut session = model.session().unwrap();
        let req = HttpRequestRecord::with_body("POST", "/items", json!({"stock": 1}));

        let first = session.serve(&req);
        let second = session.serve(&req);
        assert_eq!(first.body.as_ref().unwrap()["id"], json!("gen-1"));
        assert_eq!(second.body.as_ref().unwrap()["id"], json!("gen-2"));

        session.reset();
        let again = session.serve(&req);
        assert_eq!(
            serde_json::to_string(&again).unwrap(),
            serde_json::to_string(&first).unwrap(),
            "reset must reproduce the first response byte-for-byte"
        );
    }

    #[test]
    fn observed_errors_override_not_found_defaults() {
        let mut interactions = vec![
            inter(
                "POST", "/items", Some(json!({"stock": 5})),
                201, Some(json!({"id": "item-101", "stock": 5, "version": 0})), 1,
            ),
            inter(
                "GET", "/items/item-101", None,
                200, Some(json!({"id": "item-101", "stock": 5, "version": 0})), 2,
            ),
        ];
        interactions.push(inter(
            "GET", "/items/item-999", None,
            404, Some(json!({"error": "item not found"})), 3,
        ));
        let store = TraceStore::from_interactions(
            interactions,
            PathNormalizer::with_patterns(&["item-[0-9]+"]).unwrap(),
        );
        let model = mine(&store);
        let lc = &model.entities[0];
        assert_eq!(lc.not_found_status, 404);
        assert_eq!(lc.not_found_body, json!({"error": "item not found"}));
    }

    #[test]
    fn static_rule_uses_modal_status_and_body() {
        let interactions = vec![
            inter("POST", "/charge", Some(json!({"amount": 10})), 200,
                  Some(json!({"authorised": true, "amount": 10})), 1),
            inter("POST", "/charge", Some(json!({"amount": 20})), 200,
                  Some(json!({"authorised": true, "amount": 20})), 2),
            inter("POST", "/charge", Some(json!({"amount": 30})), 200,
                  Some(json!({"authorised": true, "amount": 30})), 3),
            inter("POST", "/charge", Some(json!({"bad": true})), 422,
                  Some(json!({"error": "invalid charge request"})), 4),
        ];
        let store = TraceStore::from_interactions(interactions, PathNormalizer::default());
        let model = mine(&store);
        let rule = &model.static_rules[0];
        assert_eq!(rule.status, 200);
        // Three distinct bodies tie at count 1 within status 200; recency
        // breaks the tie toward the newest.
        assert_eq!(rule.body.as_ref().unwrap(), &json!({"authorised": true, "amount": 30}));
    }

    #[test]
    fn miss_is_501() {
        let model = mine(&demo_store());
        let mut session = model.session().unwrap();
        let r = session.serve(&HttpRequestRecord::simple("GET", "/unknown"));
        assert_eq!(r.status, 501);
        assert_eq!(r.body.unwrap(), json!({"error": "no mined rule"}));
    }

    #[test]
    fn model_round_trips_through_json() {
        let model = mine(&demo_store());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = MinedModel::load(&path).unwrap();
        assert_eq!(model, loaded);
    }

    proptest! {
        /// Static rules never invent data: each rule's status and body
        /// appear together in some interaction for that endpoint.
        #[test]
        fn static_rules_are_trace_grounded(
            statuses in prop::collection::vec(
                prop::sample::select(vec![200u16, 201, 404, 409, 422]),
                1..15
            ),
        ) {
            let interactions: Vec<Interaction> = statuses
                .iter()
                .enumerate()
                .map(|(i, &s)| inter(
                    "POST", "/charge", Some(json!({"n": i})),
                    s, Some(json!({"code": s})), i as u64,
                ))
                .collect();
            let store = TraceStore::from_interactions(
                interactions.clone(), PathNormalizer::default(),
            );
            let model = mine(&store);
            for rule in &model.static_rules {
                let grounded = interactions.iter().any(|i| {
                    i.response.status == rule.status
                        && i.response.body == rule.body
                });
                prop_assert!(grounded, "rule {rule:?} not grounded");
            }
        }

        /// Lifecycle phase rules are grounded too: each phase's status was
        /// observed on that pattern with that method.
        #[test]
        fn lifecycle_phases_are_trace_grounded(extra_reads in 0usize..5) {
            let mut interactions = vec![
                inter(
                    "POST", "/items", Some(json!({"stock": 2})),
                    201, Some(json!({"id": "item-101", "stock": 2, "version": 0})), 0,
                ),
            ];
            for i in 0..extra_reads {
                interactions.push(inter(
                    "GET", "/items/item-101", None,
                    200, Some(json!({"id": "item-101", "stock": 2, "version": 0})),
                    (i + 1) as u64,
                ));
            }
            let store = TraceStore::from_interactions(
                interactions.clone(),
                PathNormalizer::with_patterns(&["item-[0-9]+"]).unwrap(),
            );
            let model = mine(&store);
            for lc in &model.entities {
                for rule in [&lc.read, &lc.update, &lc.delete].into_iter().flatten() {
                    let grounded = interactions.iter().any(|i| {
                        i.request.method == rule.method && i.response.status == rule.status
                    });
                    prop_assert!(grounded);
                }
            }
        }
    }
}
