//! C ABI over `hermit-core`.
//!
//! Engines and lookup results are opaque handles owned by the caller and
//! released with their `_free` function. Every call returns a
//! [`HermitStatus`]; on failure the message is available from
//! [`hermit_last_error`] on the same thread until the next failing call.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hermit_core::datagen::{self, WorkloadKind, WorkloadSpec};
use hermit_core::engine::Engine;
use hermit_core::table::{ColumnType, IdScheme, Value};
use hermit_core::trs::TrsParams;
use hermit_core::{bench, Error, ValueRange};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HermitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    NotFound = 5,
    DuplicateKey = 6,
    UnknownIndex = 7,
    Panic = 8,
}

/// Base table plus its indexes.
pub struct HermitEngine {
    engine: Engine,
}

/// Primary keys returned by a lookup, ascending.
pub struct HermitResult {
    keys: Vec<i64>,
    candidates: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(HermitStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io { .. } => HermitStatus::Io,
            Error::Parse { .. } => HermitStatus::Parse,
            Error::UnknownColumn(_) | Error::KeyNotFound(_) => HermitStatus::NotFound,
            Error::DuplicateKey(_) => HermitStatus::DuplicateKey,
            Error::UnknownIndex(_) => HermitStatus::UnknownIndex,
            _ => HermitStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(HermitStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(HermitStatus::InvalidArgument, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HermitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HermitStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            HermitStatus::Panic
        }
    }
}

/// # Safety
/// `s` is null or a NUL-terminated string valid for the call.
unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

/// # Safety
/// `e` is null or a live handle from this library.
unsafe fn engine<'a>(e: *const HermitEngine) -> Result<&'a Engine, Failure> {
    e.as_ref().map(|h| &h.engine).ok_or_else(|| null("engine"))
}

/// # Safety
/// `out` is null or valid for one write.
unsafe fn put<T>(out: *mut T, v: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

fn scheme(physical: bool) -> IdScheme {
    if physical {
        IdScheme::Physical
    } else {
        IdScheme::Logical
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hermit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Generates a synthetic table (`kind`: linear, sigmoid, stock, sensor).
///
/// # Safety
/// `kind` is a NUL-terminated string; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hermit_engine_generate(
    kind: *const c_char,
    rows: usize,
    noise: f64,
    seed: u64,
    extra_targets: usize,
    physical: bool,
    out: *mut *mut HermitEngine,
) -> HermitStatus {
    guard(|| {
        let kind: WorkloadKind = text(kind, "kind")?.parse()?;
        let spec = WorkloadSpec {
            noise_pct: noise,
            seed,
            extra_targets,
            ..WorkloadSpec::new(kind, rows)
        };
        spec.validate()?;
        let table = datagen::generate(&spec, scheme(physical))?;
        let h = Box::new(HermitEngine {
            engine: Engine::new(table),
        });
        put(out, Box::into_raw(h))
    })
}

/// Loads a dataset file whose first column is the primary key.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hermit_engine_load(path: *const c_char, physical: bool, out: *mut *mut HermitEngine) -> HermitStatus {
    guard(|| {
        let path = text(path, "path")?;
        let table = bench::load_table(Path::new(path), scheme(physical))?;
        put(out, Box::into_raw(Box::new(HermitEngine { engine: Engine::new(table) })))
    })
}

/// # Safety
/// `e` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hermit_engine_free(e: *mut HermitEngine) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// # Safety
/// `e` is a live handle; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hermit_engine_row_count(e: *const HermitEngine, out: *mut usize) -> HermitStatus {
    guard(|| put(out, engine(e)?.table().live_count()))
}

/// Ordinal of the column called `name`.
///
/// # Safety
/// `e` is a live handle; `name` is a NUL-terminated string; `out` is valid
/// for one write.
#[no_mangle]
pub unsafe extern "C" fn hermit_engine_column(e: *const HermitEngine, name: *const c_char, out: *mut usize) -> HermitStatus {
    guard(|| {
        let i = engine(e)?.table().column_index(text(name, "name")?)?;
        put(out, i)
    })
}

/// Registers a TRS-Tree index from column `target` to `host`. `params` is
/// null or a comma-separated `key=value` list.
///
/// # Safety
/// `e` is a live handle; `params` is null or a NUL-terminated string;
/// `out_id` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hermit_create_hermit_index(
    e: *const HermitEngine,
    target: usize,
    host: usize,
    params: *const c_char,
    out_id: *mut usize,
) -> HermitStatus {
    guard(|| {
        let engine = engine(e)?;
        let mut p = TrsParams::default();
        if !params.is_null() {
            for kv in text(params, "params")?.split(',').filter(|s| !s.trim().is_empty()) {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| invalid(format!("parameter `{kv}` is not key=value")))?;
                p.set(k.trim(), v.trim())?;
            }
        }
        put(out_id, engine.create_hermit_index(target, host, p)?)
    })
}

/// # Safety
/// `e` is a live handle; `out_id` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hermit_create_baseline_index(e: *const HermitEngine, target: usize, out_id: *mut usize) -> HermitStatus {
    guard(|| put(out_id, engine(e)?.create_baseline_index(target)?))
}

/// # Safety
/// `e` is a live handle; `out_id` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hermit_create_cm_index(
    e: *const HermitEngine,
    target: usize,
    host: usize,
    target_width: f64,
    host_width: f64,
    out_id: *mut usize,
) -> HermitStatus {
    guard(|| put(out_id, engine(e)?.create_cm_index(target, host, target_width, host_width)?))
}

/// Inserts one row of `len` values in schema order. NaN stands for null;
/// values of integer columns must be integral.
///
/// # Safety
/// `e` is a live handle; `values` points to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn hermit_insert(e: *const HermitEngine, values: *const f64, len: usize) -> HermitStatus {
    guard(|| {
        let engine = engine(e)?;
        if values.is_null() {
            return Err(null("values"));
        }
        let raw = std::slice::from_raw_parts(values, len);
        let types: Vec<ColumnType> = engine.table().schema().iter().map(|c| c.ty).collect();
        if types.len() != len {
            return Err(invalid(format!("row has {len} values, schema has {} columns", types.len())));
        }
        let row = raw
            .iter()
            .zip(types)
            .enumerate()
            .map(|(i, (&v, ty))| match ty {
                _ if v.is_nan() => Ok(Value::Null),
                ColumnType::F64 => Ok(Value::Float(v)),
                ColumnType::I64 if v.fract() == 0.0 && v.abs() < 9.007_199_254_740_992e15 => Ok(Value::Int(v as i64)),
                ColumnType::I64 => Err(invalid(format!("value {v} for integer column {i} is not integral"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        engine.insert(&row)?;
        Ok(())
    })
}

/// # Safety
/// `e` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn hermit_delete(e: *const HermitEngine, key: i64) -> HermitStatus {
    guard(|| {
        engine(e)?.delete(key)?;
        Ok(())
    })
}

/// Rows whose indexed column lies in `[lb, ub]`, through index `id`.
///
/// # Safety
/// `e` is a live handle; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hermit_lookup(
    e: *const HermitEngine,
    id: usize,
    lb: f64,
    ub: f64,
    out: *mut *mut HermitResult,
) -> HermitStatus {
    guard(|| {
        let engine = engine(e)?;
        let range = ValueRange::new(lb, ub)?;
        let (rows, m) = engine.lookup_with_metrics(id, &range, None)?;
        let pk = engine.table().primary_key_column();
        let mut keys: Vec<i64> = rows.iter().filter_map(|r| r[pk].as_i64()).collect();
        keys.sort_unstable();
        put(
            out,
            Box::into_raw(Box::new(HermitResult {
                keys,
                candidates: m.candidates,
            })),
        )
    })
}

/// # Safety
/// `r` is null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn hermit_result_len(r: *const HermitResult) -> usize {
    r.as_ref().map_or(0, |r| r.keys.len())
}

/// Keys of the result, or null for an empty or null result. Valid until the
/// result is freed.
///
/// # Safety
/// `r` is null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn hermit_result_keys(r: *const HermitResult) -> *const i64 {
    match r.as_ref() {
        Some(r) if !r.keys.is_empty() => r.keys.as_ptr(),
        _ => ptr::null(),
    }
}

/// Candidates examined before validation.
///
/// # Safety
/// `r` is null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn hermit_result_candidates(r: *const HermitResult) -> usize {
    r.as_ref().map_or(0, |r| r.candidates)
}

/// # Safety
/// `r` is null or a result handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hermit_result_free(r: *mut HermitResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Runs every queued reorganization task of every TRS-Tree.
///
/// # Safety
/// `e` is a live handle; `out_tasks` is null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hermit_reorganize(e: *const HermitEngine, out_tasks: *mut usize) -> HermitStatus {
    guard(|| {
        let stats = engine(e)?.reorganize(usize::MAX)?;
        if !out_tasks.is_null() {
            out_tasks.write(stats.tasks);
        }
        Ok(())
    })
}

/// Total accounted bytes of the table and all indexes.
///
/// # Safety
/// `e` is a live handle; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hermit_memory_total(e: *const HermitEngine, out: *mut usize) -> HermitStatus {
    guard(|| put(out, engine(e)?.memory_report().total()))
}
