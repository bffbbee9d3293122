//! C ABI over the chainsmell core: load ponds, parse lockfiles, render reports.
//!
//! Every fallible call returns a [`ChainsmellStatus`]; on failure the message is
//! available from [`chainsmell_last_error`] on the same thread. Strings handed
//! out by this library must be released with [`chainsmell_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use chainsmell::cli::TOOL_VERSION;
use chainsmell::lockfile::{parse_lockfile, DependencyGraph, PackageManagerKind};
use chainsmell::pond::{load_pond, DirtyPond, PondError};
use chainsmell::repoprobe::normalize_repo_url;
use chainsmell::report::{render_json, render_markdown, ReportBundle};
use chainsmell::smells::{detect_all, summarize};
use chrono::DateTime;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainsmellStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    NotRecognized = 5,
    InvalidArgument = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainsmellPackageManager {
    YarnV1 = 0,
    Pnpm = 1,
    Npm = 2,
}

impl From<ChainsmellPackageManager> for PackageManagerKind {
    fn from(kind: ChainsmellPackageManager) -> Self {
        match kind {
            ChainsmellPackageManager::YarnV1 => PackageManagerKind::YarnV1,
            ChainsmellPackageManager::Pnpm => PackageManagerKind::Pnpm,
            ChainsmellPackageManager::Npm => PackageManagerKind::Npm,
        }
    }
}

/// Opaque handle to a loaded pond.
pub struct ChainsmellPond {
    pond: DirtyPond,
}

/// Opaque handle to a parsed dependency graph.
pub struct ChainsmellGraph {
    graph: DependencyGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(message).ok());
}

struct Failure(ChainsmellStatus, String);

impl From<PondError> for Failure {
    fn from(e: PondError) -> Self {
        let status = match e {
            PondError::Io { .. } => ChainsmellStatus::Io,
            _ => ChainsmellStatus::Parse,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, recording failures and containing panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ChainsmellStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ChainsmellStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ChainsmellStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(ChainsmellStatus::NullArgument, format!("{what} is null")))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(
            ChainsmellStatus::NullArgument,
            format!("{what} is null"),
        ));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure(
            ChainsmellStatus::InvalidUtf8,
            format!("{what} is not UTF-8"),
        )
    })
}

unsafe fn emit<T>(out: *mut *mut T, value: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(
            ChainsmellStatus::NullArgument,
            "output pointer is null".into(),
        ));
    }
    *out = value;
    Ok(())
}

fn owned(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn chainsmell_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn chainsmell_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn chainsmell_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads and validates a pond file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chainsmell_pond_load(
    path: *const c_char,
    out: *mut *mut ChainsmellPond,
) -> ChainsmellStatus {
    guard(|| {
        let path = text(path, "path")?;
        let pond = load_pond(Path::new(path))?;
        emit(out, Box::into_raw(Box::new(ChainsmellPond { pond })))
    })
}

/// Parses a pond from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chainsmell_pond_from_json(
    json: *const c_char,
    out: *mut *mut ChainsmellPond,
) -> ChainsmellStatus {
    guard(|| {
        let pond = DirtyPond::from_json(text(json, "json")?)?;
        emit(out, Box::into_raw(Box::new(ChainsmellPond { pond })))
    })
}

/// Number of packages in the pond; 0 for null.
///
/// # Safety
/// `pond` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chainsmell_pond_len(pond: *const ChainsmellPond) -> usize {
    pond.as_ref().map_or(0, |p| p.pond.len())
}

unsafe fn bundle(
    pond: *const ChainsmellPond,
    generated_at_unix: i64,
) -> Result<ReportBundle, Failure> {
    let pond = &borrow(pond, "pond")?.pond;
    let generated_at = DateTime::from_timestamp(generated_at_unix, 0).ok_or_else(|| {
        Failure(
            ChainsmellStatus::InvalidArgument,
            "timestamp out of range".into(),
        )
    })?;
    let findings = detect_all(pond);
    let summary = summarize(&findings, pond);
    Ok(ReportBundle::new(
        pond,
        summary,
        &findings,
        generated_at,
        TOOL_VERSION,
    ))
}

/// Runs detection and writes the JSON report (the `summary.json` content).
///
/// # Safety
/// `pond` must be a live handle; `out` must be writable. Free the result
/// with [`chainsmell_string_free`].
#[no_mangle]
pub unsafe extern "C" fn chainsmell_pond_report_json(
    pond: *const ChainsmellPond,
    generated_at_unix: i64,
    out: *mut *mut c_char,
) -> ChainsmellStatus {
    guard(|| emit(out, owned(render_json(&bundle(pond, generated_at_unix)?))))
}

/// Runs detection and writes the Markdown report.
///
/// # Safety
/// As for [`chainsmell_pond_report_json`].
#[no_mangle]
pub unsafe extern "C" fn chainsmell_pond_report_markdown(
    pond: *const ChainsmellPond,
    generated_at_unix: i64,
    out: *mut *mut c_char,
) -> ChainsmellStatus {
    guard(|| {
        emit(
            out,
            owned(render_markdown(&bundle(pond, generated_at_unix)?)),
        )
    })
}

/// # Safety
/// `pond` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn chainsmell_pond_free(pond: *mut ChainsmellPond) {
    if !pond.is_null() {
        drop(Box::from_raw(pond));
    }
}

/// Parses lockfile text of the given format.
///
/// # Safety
/// `content` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chainsmell_lockfile_parse(
    content: *const c_char,
    kind: ChainsmellPackageManager,
    out: *mut *mut ChainsmellGraph,
) -> ChainsmellStatus {
    guard(|| {
        let graph = parse_lockfile(text(content, "content")?, kind.into())
            .map_err(|e| Failure(ChainsmellStatus::Parse, e.to_string()))?;
        emit(out, Box::into_raw(Box::new(ChainsmellGraph { graph })))
    })
}

/// Distinct `(name, version)` packages in the graph; 0 for null.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chainsmell_graph_len(graph: *const ChainsmellGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.len())
}

/// `name@version` of the package at `index` in sorted order, or null when out
/// of range.
///
/// # Safety
/// `graph` must be null or a live handle. Free the result with
/// [`chainsmell_string_free`].
#[no_mangle]
pub unsafe extern "C" fn chainsmell_graph_package(
    graph: *const ChainsmellGraph,
    index: usize,
) -> *mut c_char {
    graph
        .as_ref()
        .and_then(|g| g.graph.packages.keys().nth(index))
        .map_or(ptr::null_mut(), |id| owned(id.to_string()))
}

/// # Safety
/// `graph` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn chainsmell_graph_free(graph: *mut ChainsmellGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Normalizes a `repository` field value to `https://host/owner/repo`.
/// Returns `NotRecognized` when the value is not a source URL.
///
/// # Safety
/// `raw` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chainsmell_normalize_repo_url(
    raw: *const c_char,
    out: *mut *mut c_char,
) -> ChainsmellStatus {
    guard(|| {
        let raw = text(raw, "raw")?;
        let url = normalize_repo_url(raw).ok_or_else(|| {
            Failure(
                ChainsmellStatus::NotRecognized,
                format!("{raw:?} is not a source URL"),
            )
        })?;
        emit(out, owned(url.canonical_https))
    })
}
