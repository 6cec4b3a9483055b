//! Captured HTTP traffic: the interaction record, a JSONL-backed store,
//! path normalization, and per-endpoint summaries for prompt building.

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::OnceLock;
use thiserror::Error;

/// HTTP methods a trace line may carry.
pub const METHODS: [&str; 7] = ["GET", "HEAD", "POST", "PUT", "PATCH", "DELETE", "OPTIONS"];

/// Request headers that are retained when recording; everything else is
/// dropped at capture time so stores stay small and free of noise.
pub const RETAINED_HEADERS: [&str; 2] = ["Authorization", "Idempotency-Key"];

/// Filters an arbitrary header set down to the retained allowlist,
/// normalizing header-name casing to the canonical forms.
pub fn retained_headers<'a, I>(headers: I) -> BTreeMap<String, String>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut out = BTreeMap::new();
    for (name, value) in headers {
        if let Some(canon) = RETAINED_HEADERS
            .iter()
            .find(|r| r.eq_ignore_ascii_case(name))
        {
            out.insert((*canon).to_string(), value.to_string());
        }
    }
    out
}

// ============================================================================
// Records
// ============================================================================

/// One observed HTTP request.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequestRecord {
    /// Uppercase HTTP method, one of [`METHODS`].
    pub method: String,
    /// Request path beginning with `/`, without the query string.
    pub path: String,
    /// Query parameters in original order; duplicates allowed.
    pub query: Vec<(String, String)>,
    /// JSON body if the request carried one.
    pub body: Option<Value>,
    /// Retained request headers (see [`RETAINED_HEADERS`]).
    pub headers: BTreeMap<String, String>,
}

impl HttpRequestRecord {
    /// Builds a record, filtering headers down to the retained set.
    pub fn new<'a, I>(
        method: &str,
        path: &str,
        query: Vec<(String, String)>,
        body: Option<Value>,
        headers: I,
    ) -> HttpRequestRecord
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        HttpRequestRecord {
            method: method.to_ascii_uppercase(),
            path: path.to_string(),
            query,
            body,
            headers: retained_headers(headers),
        }
    }

    /// A minimal record for the common method + path case.
    pub fn simple(method: &str, path: &str) -> HttpRequestRecord {
        HttpRequestRecord::new(method, path, Vec::new(), None, [])
    }

    /// Same as [`HttpRequestRecord::simple`] with a JSON body attached.
    pub fn with_body(method: &str, path: &str, body: Value) -> HttpRequestRecord {
        HttpRequestRecord::new(method, path, Vec::new(), Some(body), [])
    }
}

/// One observed HTTP response.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponseRecord {
    /// Status code within 100..=599.
    pub status: u16,
    /// JSON body if the response carried one.
    pub body: Option<Value>,
    /// Response headers; may be empty.
    pub headers: BTreeMap<String, String>,
}

impl HttpResponseRecord {
    pub fn new(status: u16, body: Option<Value>) -> HttpResponseRecord {
        HttpResponseRecord {
            status,
            body,
            headers: BTreeMap::new(),
        }
    }
}

/// A request/response pair captured from one service.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub request: HttpRequestRecord,
    pub response: HttpResponseRecord,
    /// Logical name of the service that answered (e.g. `inventory`).
    pub service: String,
    /// Capture time in seconds since the Unix epoch. Only the ordering
    /// matters: replay recency and mining tie-breaks compare timestamps,
    /// nothing interprets them as wall-clock values.
    pub timestamp: u64,
    /// Optional grouping key for interactions from one logical session.
    pub session: Option<String>,
}

// ============================================================================
// JSONL wire format
// ============================================================================

/// Flat on-disk form of an [`Interaction`], one JSON object per line.
/// Unknown fields are ignored on load and never written on save.
#[derive(Debug, Serialize, Deserialize)]
struct TraceLine {
    method: String,
    path: String,
    #[serde(default)]
    query: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    body: Option<Value>,
    #[serde(default)]
    headers: BTreeMap<String, String>,
    status: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    response_body: Option<Value>,
    #[serde(default)]
    response_headers: BTreeMap<String, String>,
    service: String,
    timestamp: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    session: Option<String>,
}

impl From<&Interaction> for TraceLine {
    fn from(i: &Interaction) -> TraceLine {
        TraceLine {
            method: i.request.method.clone(),
            path: i.request.path.clone(),
            query: i.request.query.clone(),
            body: i.request.body.clone(),
            headers: i.request.headers.clone(),
            status: i.response.status,
            response_body: i.response.body.clone(),
            response_headers: i.response.headers.clone(),
            service: i.service.clone(),
            timestamp: i.timestamp,
            session: i.session.clone(),
        }
    }
}

/// Errors raised while loading, saving, or configuring trace handling.
#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("invalid id pattern {pattern:?}: {message}")]
    Pattern { pattern: String, message: String },
}

fn line_error(line: usize, message: impl Into<String>) -> TraceError {
    TraceError::Line {
        line,
        message: message.into(),
    }
}

fn validate_line(line_no: usize, line: TraceLine) -> Result<Interaction, TraceError> {
    if !METHODS.contains(&line.method.as_str()) {
        return Err(line_error(
            line_no,
            format!("unknown HTTP method {:?}", line.method),
        ));
    }
    if !line.path.starts_with('/') {
        return Err(line_error(
            line_no,
            format!("path {:?} does not start with '/'", line.path),
        ));
    }
    if !(100..=599).contains(&line.status) {
        return Err(line_error(
            line_no,
            format!("status {} outside 100..=599", line.status),
        ));
    }
    if line.service.is_empty() {
        return Err(line_error(line_no, "service name is empty"));
    }
    let headers = retained_headers(
        line.headers
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str())),
    );
    Ok(Interaction {
        request: HttpRequestRecord {
            method: line.method,
            path: line.path,
            query: line.query,
            body: line.body,
            headers,
        },
        response: HttpResponseRecord {
            status: line.status,
            body: line.response_body,
            headers: line.response_headers,
        },
        service: line.service,
        timestamp: line.timestamp,
        session: line.session,
    })
}

// ============================================================================
// Path normalization
// ============================================================================

/// Rewrites identifier-like path segments to `{id}` so distinct concrete
/// paths collapse onto one endpoint pattern.
///
/// Built-in classifiers recognize all-digit segments and UUIDs; additional
/// regex patterns (matched against the whole segment) can be supplied for
/// service-specific id schemes such as `item-101`.
#[derive(Debug, Clone)]
pub struct PathNormalizer {
    sources: Vec<String>,
    regexes: Vec<Regex>,
}

impl PartialEq for PathNormalizer {
    fn eq(&self, other: &Self) -> bool {
        self.sources == other.sources
    }
}

fn uuid_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            "^[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}$",
        )
        .expect("static regex compiles")
    })
}

impl Default for PathNormalizer {
    fn default() -> Self {
        PathNormalizer::with_patterns::<&str>(&[]).expect("no custom patterns")
    }
}

impl PathNormalizer {
    /// Builds a normalizer with the built-in classifiers plus custom segment
    /// patterns. Each pattern must match an entire segment to classify it.
    pub fn with_patterns<S: AsRef<str>>(patterns: &[S]) -> Result<PathNormalizer, TraceError> {
        let mut sources = Vec::new();
        let mut regexes = Vec::new();
        for p in patterns {
            let p = p.as_ref();
            let anchored = format!("^(?:{p})$");
            let re = Regex::new(&anchored).map_err(|e| TraceError::Pattern {
                pattern: p.to_string(),
                message: e.to_string(),
            })?;
            sources.push(p.to_string());
            regexes.push(re);
        }
        Ok(PathNormalizer { sources, regexes })
    }

    /// The custom patterns this normalizer was built with.
    pub fn patterns(&self) -> &[String] {
        &self.sources
    }

    fn is_id_segment(&self, seg: &str) -> bool {
        if seg.is_empty() {
            return false;
        }
        if seg.bytes().all(|b| b.is_ascii_digit()) {
            return true;
        }
        if uuid_regex().is_match(seg) {
            return true;
        }
        self.regexes.iter().any(|re| re.is_match(seg))
    }

    /// Rewrites identifier segments to `{id}`. Idempotent: normalizing a
    /// normalized path returns it unchanged.
    pub fn normalize(&self, path: &str) -> String {
        let mut out = String::with_capacity(path.len());
        for (i, seg) in path.split('/').enumerate() {
            if i > 0 {
                out.push('/');
            }
            if seg == "{id}" || self.is_id_segment(seg) {
                out.push_str("{id}");
            } else {
                out.push_str(seg);
            }
        }
        out
    }
}

// ============================================================================
// Store
// ============================================================================

/// An in-memory set of interactions with a derived per-endpoint index.
#[derive(Debug, Clone)]
pub struct TraceStore {
    interactions: Vec<Interaction>,
    /// `(method, normalized path)` to indices into `interactions`,
    /// in file order.
    by_endpoint: BTreeMap<(String, String), Vec<usize>>,
    normalizer: PathNormalizer,
}

impl PartialEq for TraceStore {
    fn eq(&self, other: &Self) -> bool {
        self.interactions == other.interactions && self.normalizer == other.normalizer
    }
}

impl TraceStore {
    /// Builds a store from already-validated interactions.
    pub fn from_interactions(
        interactions: Vec<Interaction>,
        normalizer: PathNormalizer,
    ) -> TraceStore {
        let mut by_endpoint: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
        for (idx, i) in interactions.iter().enumerate() {
            let key = (
                i.request.method.clone(),
                normalizer.normalize(&i.request.path),
            );
            by_endpoint.entry(key).or_default().push(idx);
        }
        TraceStore {
            interactions,
            by_endpoint,
            normalizer,
        }
    }

    /// Loads a JSONL trace file using the default normalizer.
    pub fn load(path: impl AsRef<Path>) -> Result<TraceStore, TraceError> {
        TraceStore::load_with(path, PathNormalizer::default())
    }

    /// Loads a JSONL trace file. Each non-blank line must be a valid
    /// interaction; the first malformed line aborts the load with an error
    /// naming that line. Unknown fields on a line are ignored.
    pub fn load_with(
        path: impl AsRef<Path>,
        normalizer: PathNormalizer,
    ) -> Result<TraceStore, TraceError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| TraceError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let reader = BufReader::new(file);
        let mut interactions = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let text = line.map_err(|e| TraceError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            if text.trim().is_empty() {
                continue;
            }
            let parsed: TraceLine = serde_json::from_str(&text)
                .map_err(|e| line_error(line_no, e.to_string()))?;
            interactions.push(validate_line(line_no, parsed)?);
        }
        Ok(TraceStore::from_interactions(interactions, normalizer))
    }

    /// Writes the store as JSONL, one interaction per line, in order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let path = path.as_ref();
        let mut file = std::fs::File::create(path).map_err(|e| TraceError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        for i in &self.interactions {
            let line = serde_json::to_string(&TraceLine::from(i))
                .expect("trace line serializes");
            writeln!(file, "{line}").map_err(|e| TraceError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
        }
        Ok(())
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    /// Appends one interaction to a JSONL file, creating it if needed.
    /// Useful for capture flows that must not lose lines on interruption;
    /// bulk writes should prefer [`TraceStore::save`].
    pub fn append_line(path: impl AsRef<Path>, interaction: &Interaction) -> Result<(), TraceError> {
        let path = path.as_ref();
        let io_err = |e| TraceError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        let line =
            serde_json::to_string(&TraceLine::from(interaction)).expect("trace line serializes");
        writeln!(file, "{line}").map_err(io_err)
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn normalizer(&self) -> &PathNormalizer {
        &self.normalizer
    }

    /// The `(method, normalized path)` index, in sorted key order.
    pub fn endpoint_index(&self) -> &BTreeMap<(String, String), Vec<usize>> {
        &self.by_endpoint
    }

    /// Per-endpoint summaries ordered by call count descending, then by
    /// method and pattern for determinism.
    pub fn endpoint_summaries(&self) -> Vec<EndpointSummary> {
        let mut rows: Vec<EndpointSummary> = self
            .by_endpoint
            .iter()
            .map(|((method, pattern), idxs)| {
                let mut histogram: BTreeMap<u16, usize> = BTreeMap::new();
                let mut key_sets: std::collections::BTreeSet<Vec<String>> =
                    std::collections::BTreeSet::new();
                for &i in idxs {
                    let inter = &self.interactions[i];
                    *histogram.entry(inter.response.status).or_default() += 1;
                    if (200..300).contains(&inter.response.status) {
                        if let Some(Value::Object(map)) = &inter.response.body {
                            let mut keys: Vec<String> = map.keys().cloned().collect();
                            keys.sort();
                            key_sets.insert(keys);
                        }
                    }
                }
                EndpointSummary {
                    method: method.clone(),
                    pattern: pattern.clone(),
                    count: idxs.len(),
                    status_histogram: histogram,
                    sample_body_keys: key_sets.into_iter().take(3).collect(),
                }
            })
            .collect();
        rows.sort_by(|a, b| {
            b.count
                .cmp(&a.count)
                .then_with(|| a.method.cmp(&b.method))
                .then_with(|| a.pattern.cmp(&b.pattern))
        });
        rows
    }

    /// Renders a plain-text traffic summary no longer than `char_budget`
    /// characters: one line per endpoint with its status histogram and
    /// sample response-body key sets. An empty store summarizes to
    /// `"no traces available"`. When the budget is too small for every
    /// line, whole trailing lines are dropped and a truncation marker is
    /// appended.
    pub fn summarize(&self, char_budget: usize) -> String {
        if self.is_empty() {
            return "no traces available".to_string();
        }
        let mut lines = vec!["Observed traffic by endpoint:".to_string()];
        for s in self.endpoint_summaries() {
            lines.push(s.render());
        }
        let full = lines.join("\n");
        if full.chars().count() <= char_budget {
            return full;
        }
        const MARKER: &str = "(truncated)";
        let mut out = String::new();
        let mut used = 0usize;
        for line in &lines {
            let cost = line.chars().count() + 1; // '\n'
            if used + cost + MARKER.chars().count() > char_budget {
                break;
            }
            out.push_str(line);
            out.push('\n');
            used += cost;
        }
        out.push_str(MARKER);
        out
    }
}

/// Aggregate view of one `(method, pattern)` endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointSummary {
    pub method: String,
    pub pattern: String,
    /// Number of captured interactions for this endpoint.
    pub count: usize,
    /// Observed status codes and how often each occurred; counts sum to
    /// `count`.
    pub status_histogram: BTreeMap<u16, usize>,
    /// Up to three distinct sorted top-level key lists seen in 2xx object
    /// bodies.
    pub sample_body_keys: Vec<Vec<String>>,
}

impl EndpointSummary {
    fn render(&self) -> String {
        let statuses = self
            .status_histogram
            .iter()
            .map(|(code, n)| format!("{code} x{n}"))
            .collect::<Vec<_>>()
            .join(", ");
        let mut line = format!(
            "{} {}: {} calls; statuses: {statuses}",
            self.method, self.pattern, self.count
        );
        if !self.sample_body_keys.is_empty() {
            let keys = self
                .sample_body_keys
                .iter()
                .map(|ks| format!("[{}]", ks.join(", ")))
                .collect::<Vec<_>>()
                .join(" | ");
            line.push_str(&format!("; body keys: {keys}"));
        }
        line
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn interaction(
        method: &str,
        path: &str,
        status: u16,
        response_body: Option<Value>,
        timestamp: u64,
    ) -> Interaction {
        Interaction {
            request: HttpRequestRecord::simple(method, path),
            response: HttpResponseRecord::new(status, response_body),
            service: "inventory".to_string(),
            timestamp,
            session: None,
        }
    }

    fn demo_normalizer() -> PathNormalizer {
        PathNormalizer::with_patterns(&["item-[0-9]+", "rsv-[0-9]+"]).unwrap()
    }

    #[test]
    fn normalizer_handles_builtin_classes() {
        let n = PathNormalizer::default();
        assert_eq!(n.normalize("/items/123"), "/items/{id}");
        assert_eq!(
            n.normalize("/orders/550e8400-e29b-41d4-a716-446655440000/lines/7"),
            "/orders/{id}/lines/{id}"
        );
        assert_eq!(n.normalize("/items"), "/items");
        assert_eq!(n.normalize("/"), "/");
    }

    #[test]
    fn normalizer_custom_patterns_match_whole_segments() {
        let n = demo_normalizer();
        assert_eq!(n.normalize("/items/item-001"), "/items/{id}");
        assert_eq!(n.normalize("/items/item-001/reserve"), "/items/{id}/reserve");
        // "item-1x" only contains a match; the segment as a whole does not
        // match, so it is left alone.
        assert_eq!(n.normalize("/items/item-1x"), "/items/item-1x");
    }

    #[test]
    fn normalizer_rejects_bad_patterns() {
        let err = PathNormalizer::with_patterns(&["["]).unwrap_err();
        assert!(matches!(err, TraceError::Pattern { .. }));
    }

    #[test]
    fn load_rejects_malformed_line_citing_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        // Line 2 lacks the required status field.
        let good = r#"{"method":"GET","path":"/items","query":[],"headers":{},"status":200,"response_headers":{},"service":"inventory","timestamp":1}"#;
        let bad = r#"{"method":"GET","path":"/items","service":"inventory","timestamp":2}"#;
        std::fs::write(&path, format!("{good}\n{bad}\n")).unwrap();
        let err = TraceStore::load(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "got: {err}");
    }

    #[test]
    fn load_ignores_unknown_fields_and_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extra.jsonl");
        let line = r#"{"method":"GET","path":"/items","status":200,"service":"inventory","timestamp":1,"color":"green"}"#;
        std::fs::write(&path, format!("{line}\n\n")).unwrap();
        let store = TraceStore::load(&path).unwrap();
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn load_filters_headers_to_retained_set() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("headers.jsonl");
        let line = r#"{"method":"GET","path":"/items","headers":{"authorization":"Bearer x","Accept":"*/*","idempotency-key":"k1"},"status":200,"service":"inventory","timestamp":1}"#;
        std::fs::write(&path, format!("{line}\n")).unwrap();
        let store = TraceStore::load(&path).unwrap();
        let headers = &store.interactions()[0].request.headers;
        assert_eq!(headers.get("Authorization").unwrap(), "Bearer x");
        assert_eq!(headers.get("Idempotency-Key").unwrap(), "k1");
        assert!(!headers.contains_key("Accept"));
    }

    #[test]
    fn load_validates_method_path_status() {
        let dir = tempfile::tempdir().unwrap();
        for (name, line, needle) in [
            (
                "method",
                r#"{"method":"FETCH","path":"/x","status":200,"service":"s","timestamp":1}"#,
                "method",
            ),
            (
                "path",
                r#"{"method":"GET","path":"x","status":200,"service":"s","timestamp":1}"#,
                "path",
            ),
            (
                "status",
                r#"{"method":"GET","path":"/x","status":99,"service":"s","timestamp":1}"#,
                "status",
            ),
        ] {
            let path = dir.path().join(format!("{name}.jsonl"));
            std::fs::write(&path, format!("{line}\n")).unwrap();
            let err = TraceStore::load(&path).unwrap_err();
            let msg = err.to_string();
            assert!(msg.contains("line 1"), "{name}: {msg}");
            assert!(msg.contains(needle), "{name}: {msg}");
        }
    }

    #[test]
    fn endpoint_index_groups_by_pattern() {
        let store = TraceStore::from_interactions(
            vec![
                interaction("GET", "/items/item-001", 200, None, 1),
                interaction("GET", "/items/item-002", 200, None, 2),
                interaction("GET", "/items", 200, None, 3),
            ],
            demo_normalizer(),
        );
        let idx = store.endpoint_index();
        assert_eq!(
            idx.get(&("GET".to_string(), "/items/{id}".to_string()))
                .unwrap()
                .len(),
            2
        );
        assert_eq!(
            idx.get(&("GET".to_string(), "/items".to_string()))
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn summary_contains_patterns_and_histogram() {
        // Frozen expectation: 12 calls to GET /items/{id}, ten 200s and two
        // 404s, must summarize with both counts on the endpoint's line.
        let mut interactions = Vec::new();
        for t in 0..10 {
            interactions.push(interaction(
                "GET",
                &format!("/items/item-00{}", t % 3),
                200,
                Some(json!({"id": "x", "stock": 1, "version": 0})),
                t,
            ));
        }
        for t in 10..12 {
            interactions.push(interaction(
                "GET",
                "/items/item-999",
                404,
                Some(json!({"error": "item not found"})),
                t,
            ));
        }
        let store = TraceStore::from_interactions(interactions, demo_normalizer());
        let summary = store.summarize(2_000);
        assert!(summary.contains("GET /items/{id}"), "{summary}");
        assert!(summary.contains("200 x10"), "{summary}");
        assert!(summary.contains("404 x2"), "{summary}");
        assert!(summary.contains("[id, stock, version]"), "{summary}");
    }

    #[test]
    fn summary_of_empty_store() {
        let store = TraceStore::from_interactions(Vec::new(), PathNormalizer::default());
        assert_eq!(store.summarize(500), "no traces available");
    }

    #[test]
    fn summary_respects_char_budget() {
        // Mixed-alphanumeric segments don't normalize away, so every path
        // stays a distinct endpoint line and the budget must bite.
        let interactions: Vec<Interaction> = (0..200)
            .map(|i| interaction("GET", &format!("/very/long/endpoint/route{i}/sub"), 200, None, i))
            .collect();
        let store = TraceStore::from_interactions(interactions, PathNormalizer::default());
        let summary = store.summarize(300);
        assert!(summary.chars().count() <= 300, "len {}", summary.chars().count());
        assert!(summary.ends_with("(truncated)"));
    }

    #[test]
    fn save_load_round_trip_preserves_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.jsonl");
        let store = TraceStore::from_interactions(
            vec![
                Interaction {
                    request: HttpRequestRecord::new(
                        "POST",
                        "/items/item-001/reserve",
                        vec![("a".into(), "1".into()), ("a".into(), "2".into())],
                        Some(json!({"quantity": 1, "version": 0})),
                        [("Authorization", "Bearer t")],
                    ),
                    response: HttpResponseRecord::new(
                        201,
                        Some(json!({"reservation_id": "rsv-1", "version": 1})),
                    ),
                    service: "inventory".to_string(),
                    timestamp: 42,
                    session: Some("s1".to_string()),
                },
                interaction("DELETE", "/items/item-001", 204, None, 43),
            ],
            demo_normalizer(),
        );
        store.save(&path).unwrap();
        let loaded = TraceStore::load_with(&path, demo_normalizer()).unwrap();
        assert_eq!(store, loaded);
    }

    // ------------------------------------------------------------------
    // Properties
    // ------------------------------------------------------------------

    fn arb_segment() -> impl Strategy<Value = String> {
        prop_oneof![
            Just("items".to_string()),
            Just("reserve".to_string()),
            Just("123".to_string()),
            Just("item-007".to_string()),
            Just("a1b2".to_string()),
            Just("550e8400-e29b-41d4-a716-446655440000".to_string()),
            "[a-z]{1,8}",
        ]
    }

    fn arb_path() -> impl Strategy<Value = String> {
        prop::collection::vec(arb_segment(), 1..5)
            .prop_map(|segs| format!("/{}", segs.join("/")))
    }

    fn arb_interaction() -> impl Strategy<Value = Interaction> {
        (
            prop::sample::select(vec!["GET", "POST", "PUT", "DELETE"]),
            arb_path(),
            200u16..=599u16,
            prop::option::of(prop_oneof![
                Just(json!({"id": "x"})),
                Just(json!([1, 2])),
                Just(json!({"error": "nope"})),
            ]),
            0u64..1_000_000u64,
            prop::option::of("[a-z]{1,6}"),
        )
            .prop_map(|(method, path, status, body, timestamp, session)| Interaction {
                request: HttpRequestRecord::simple(method, &path),
                response: HttpResponseRecord::new(status, body),
                service: "svc".to_string(),
                timestamp,
                session,
            })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(path in arb_path()) {
            let n = demo_normalizer();
            let once = n.normalize(&path);
            prop_assert_eq!(n.normalize(&once), once);
        }

        #[test]
        fn round_trip_equals_original(
            interactions in prop::collection::vec(arb_interaction(), 0..20)
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("prop.jsonl");
            let store = TraceStore::from_interactions(interactions, PathNormalizer::default());
            store.save(&path).unwrap();
            let loaded = TraceStore::load(&path).unwrap();
            prop_assert_eq!(store, loaded);
        }

        #[test]
        fn histograms_sum_to_counts(
            interactions in prop::collection::vec(arb_interaction(), 0..30)
        ) {
            let total = interactions.len();
            let store = TraceStore::from_interactions(interactions, PathNormalizer::default());
            let summaries = store.endpoint_summaries();
            let mut sum = 0usize;
            for s in &summaries {
                let hist_total: usize = s.status_histogram.values().sum();
                prop_assert_eq!(hist_total, s.count);
                sum += s.count;
            }
            prop_assert_eq!(sum, total);
        }
    }
}
