//! C ABI over the three deterministic mock engines: tiered replay, mined
//! rules, and contract-document interpretation.
//!
//! A host process opens a handle from files on disk, feeds it one request
//! at a time as JSON, and gets each answer back as JSON. Requests look like
//! `{"method": "GET", "path": "/items/item-7", "query": [], "body": null}`
//! (only `method` and `path` are required); answers are
//! `{"status": 200, "body": {...}, "headers": {...}}` with `body` and
//! `headers` omitted when absent.
//!
//! Conventions, also spelled out in `include/depsim.h`:
//!
//! * Functions returning [`DepsimStatus`] report failure through the return
//!   value; [`depsim_last_error`] then holds a message for the calling
//!   thread until its next failing call.
//! * Strings returned through out-parameters belong to the caller and must
//!   be released with [`depsim_string_free`]; handles with
//!   [`depsim_mock_close`]. Both accept null.
//! * Handles are internally locked: calls on one handle from several
//!   threads serialize rather than race.
//!
//! The model-backed online engine is not exposed here — it needs an async
//! runtime and a model endpoint, which a C host is better off reaching
//! through the served HTTP interface of `depsim mock serve`.

use depsim::ir::{ContractIR, IrSession};
use depsim::miner::{mine, MinerSession};
use depsim::replay::{build_index, ReplayIndex};
use depsim::trace::{HttpRequestRecord, PathNormalizer, TraceStore};
use serde::Deserialize;
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;

/// Result of every fallible call in this interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepsimStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Input files could not be read, parsed, or compiled into an engine.
    LoadFailed = 3,
    /// The request JSON was malformed or broke a request invariant.
    InvalidRequest = 4,
    /// A bug: the library panicked and the call was absorbed at the
    /// boundary.
    InternalPanic = 5,
}

enum Engine {
    Replay(ReplayIndex),
    Pattern(MinerSession),
    Contract(IrSession),
}

/// An opened mock engine. Opaque to C; obtain from one of the
/// `depsim_mock_open_*` functions and release with [`depsim_mock_close`].
pub struct DepsimMock {
    engine: Mutex<Engine>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl std::fmt::Display) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(CString::new(text).expect("nul bytes stripped"));
    });
}

/// Message from the calling thread's most recent failing call, or null if
/// none has failed yet. The pointer stays valid until the next failing
/// call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn depsim_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|s| s.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// The library version as a static string; do not free it.
#[no_mangle]
pub extern "C" fn depsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Reads a borrowed C string argument, reporting null and encoding problems
/// through the shared error convention.
unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, DepsimStatus> {
    if ptr.is_null() {
        set_last_error(format!("{what} must not be null"));
        return Err(DepsimStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error(format!("{what} is not valid UTF-8"));
        DepsimStatus::InvalidUtf8
    })
}

unsafe fn read_patterns<'a>(
    patterns: *const *const c_char,
    count: usize,
) -> Result<Vec<&'a str>, DepsimStatus> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if patterns.is_null() {
        set_last_error("id_patterns must not be null when id_pattern_count > 0");
        return Err(DepsimStatus::NullArgument);
    }
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        out.push(read_str(*patterns.add(i), "id_patterns entry")?);
    }
    Ok(out)
}

fn load_store(path: &str, patterns: &[&str]) -> Result<TraceStore, DepsimStatus> {
    let normalizer = PathNormalizer::with_patterns(patterns).map_err(|e| {
        set_last_error(e);
        DepsimStatus::LoadFailed
    })?;
    TraceStore::load_with(path, normalizer).map_err(|e| {
        set_last_error(e);
        DepsimStatus::LoadFailed
    })
}

fn hand_out(engine: Engine, out: *mut *mut DepsimMock) -> DepsimStatus {
    let handle = Box::new(DepsimMock {
        engine: Mutex::new(engine),
    });
    unsafe { *out = Box::into_raw(handle) };
    DepsimStatus::Ok
}

/// Absorbs panics so they never unwind across the C boundary.
fn guarded(body: impl FnOnce() -> DepsimStatus) -> DepsimStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(format!("internal panic: {message}"));
            DepsimStatus::InternalPanic
        }
    }
}

macro_rules! require_out {
    ($out:ident) => {
        if $out.is_null() {
            set_last_error(concat!(stringify!($out), " must not be null"));
            return DepsimStatus::NullArgument;
        }
    };
}

/// Opens a tiered replay engine over a JSONL trace file. `id_patterns` is an
/// optional array of `id_pattern_count` whole-segment regexes (such as
/// `item-[0-9]+`) folded to `{id}` when matching by endpoint shape; all-digit
/// and UUID segments are always folded.
///
/// # Safety
/// `traces_path` must be a valid C string, `id_patterns` an array of
/// `id_pattern_count` valid C strings (or null when the count is 0), and
/// `out` a valid location to store the handle.
#[no_mangle]
pub unsafe extern "C" fn depsim_mock_open_replay(
    traces_path: *const c_char,
    id_patterns: *const *const c_char,
    id_pattern_count: usize,
    out: *mut *mut DepsimMock,
) -> DepsimStatus {
    guarded(|| {
        require_out!(out);
        let path = match read_str(traces_path, "traces_path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let patterns = match read_patterns(id_patterns, id_pattern_count) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match load_store(path, &patterns) {
            Ok(store) => hand_out(Engine::Replay(build_index(&store)), out),
            Err(status) => status,
        }
    })
}

/// Opens a pattern engine: mines rules and entity lifecycles from a JSONL
/// trace file and serves from them. Arguments as for
/// [`depsim_mock_open_replay`].
///
/// # Safety
/// Same contract as [`depsim_mock_open_replay`].
#[no_mangle]
pub unsafe extern "C" fn depsim_mock_open_pattern(
    traces_path: *const c_char,
    id_patterns: *const *const c_char,
    id_pattern_count: usize,
    out: *mut *mut DepsimMock,
) -> DepsimStatus {
    guarded(|| {
        require_out!(out);
        let path = match read_str(traces_path, "traces_path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let patterns = match read_patterns(id_patterns, id_pattern_count) {
            Ok(p) => p,
            Err(status) => return status,
        };
        let store = match load_store(path, &patterns) {
            Ok(store) => store,
            Err(status) => return status,
        };
        match mine(&store).session() {
            Ok(session) => hand_out(Engine::Pattern(session), out),
            Err(e) => {
                set_last_error(e);
                DepsimStatus::LoadFailed
            }
        }
    })
}

/// Opens a contract engine from a contract document. The document is
/// validated; any diagnostic rejects it with [`DepsimStatus::LoadFailed`]
/// and the full list in [`depsim_last_error`].
///
/// # Safety
/// `contract_path` must be a valid C string and `out` a valid location to
/// store the handle.
#[no_mangle]
pub unsafe extern "C" fn depsim_mock_open_contract(
    contract_path: *const c_char,
    out: *mut *mut DepsimMock,
) -> DepsimStatus {
    guarded(|| {
        require_out!(out);
        let path = match read_str(contract_path, "contract_path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let doc = match ContractIR::load(path) {
            Ok(doc) => doc,
            Err(e) => {
                set_last_error(e);
                return DepsimStatus::LoadFailed;
            }
        };
        match IrSession::new(doc) {
            Ok(session) => hand_out(Engine::Contract(session), out),
            Err(e) => {
                set_last_error(e);
                DepsimStatus::LoadFailed
            }
        }
    })
}

#[derive(Deserialize)]
struct RequestDoc {
    method: String,
    path: String,
    #[serde(default)]
    query: Vec<(String, String)>,
    #[serde(default)]
    body: Option<serde_json::Value>,
    #[serde(default)]
    headers: BTreeMap<String, String>,
}

/// Answers one request. `request_json` must carry `method` and `path`
/// (path starting with `/`); `query`, `body`, and `headers` are optional.
/// On success `*out_response_json` receives a JSON rendering of the
/// engine's answer — release it with [`depsim_string_free`].
///
/// # Safety
/// `mock` must be a live handle from an open function, `request_json` a
/// valid C string, and `out_response_json` a valid location to store the
/// string.
#[no_mangle]
pub unsafe extern "C" fn depsim_mock_respond(
    mock: *mut DepsimMock,
    request_json: *const c_char,
    out_response_json: *mut *mut c_char,
) -> DepsimStatus {
    guarded(|| {
        require_out!(out_response_json);
        if mock.is_null() {
            set_last_error("mock must not be null");
            return DepsimStatus::NullArgument;
        }
        let text = match read_str(request_json, "request_json") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let doc: RequestDoc = match serde_json::from_str(text) {
            Ok(doc) => doc,
            Err(e) => {
                set_last_error(format!("request_json: {e}"));
                return DepsimStatus::InvalidRequest;
            }
        };
        if !doc.path.starts_with('/') {
            set_last_error(format!("request path {:?} must start with '/'", doc.path));
            return DepsimStatus::InvalidRequest;
        }
        let request = HttpRequestRecord::new(
            &doc.method,
            &doc.path,
            doc.query,
            doc.body,
            doc.headers.iter().map(|(k, v)| (k.as_str(), v.as_str())),
        );

        let mock = &*mock;
        let mut engine = mock.engine.lock().unwrap_or_else(|e| e.into_inner());
        let response = match &mut *engine {
            Engine::Replay(index) => index.respond(&request),
            Engine::Pattern(session) => session.serve(&request),
            Engine::Contract(session) => session.serve(&request),
        };
        let rendered =
            serde_json::to_string(&response).expect("engine responses serialize");
        *out_response_json = CString::new(rendered)
            .expect("JSON strings carry no nul bytes")
            .into_raw();
        DepsimStatus::Ok
    })
}

/// Drops the handle's session state: the pattern engine forgets created
/// entities and restarts its id counter, the contract engine restores its
/// declared initial variables. Replay is stateless, so this is a no-op.
///
/// # Safety
/// `mock` must be a live handle from an open function.
#[no_mangle]
pub unsafe extern "C" fn depsim_mock_reset(mock: *mut DepsimMock) -> DepsimStatus {
    guarded(|| {
        if mock.is_null() {
            set_last_error("mock must not be null");
            return DepsimStatus::NullArgument;
        }
        let mock = &*mock;
        let mut engine = mock.engine.lock().unwrap_or_else(|e| e.into_inner());
        match &mut *engine {
            Engine::Replay(_) => {}
            Engine::Pattern(session) => session.reset(),
            Engine::Contract(session) => session.reset(),
        }
        DepsimStatus::Ok
    })
}

/// Releases a handle. Null is accepted and ignored.
///
/// # Safety
/// `mock` must be null or a handle not closed before; the handle must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn depsim_mock_close(mock: *mut DepsimMock) {
    if !mock.is_null() {
        drop(Box::from_raw(mock));
    }
}

/// Releases a string returned through an out-parameter. Null is accepted
/// and ignored.
///
/// # Safety
/// `s` must be null or a string this library returned, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn depsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
