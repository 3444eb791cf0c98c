//! C ABI for the topology optimization engine. Handles are opaque pointers;
//! every fallible call returns a status code and the last error message is
//! retrievable per thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use lsto::config::{parse_config, RunConfig};
use lsto::driver::{extract_layout, run_adaptive, run_fixed, RunResult};
use lsto::io::write_outputs;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum LstoStatus {
    Ok = 0,
    InvalidArgument = 1,
    ParseError = 2,
    NumericalError = 3,
    IoError = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &lsto::Error) -> LstoStatus {
    match err {
        lsto::Error::Parse { .. } => LstoStatus::ParseError,
        lsto::Error::Io { .. } => LstoStatus::IoError,
        lsto::Error::Parameter(_) => LstoStatus::InvalidArgument,
        _ => LstoStatus::NumericalError,
    }
}

/// Opaque run configuration.
pub struct LstoConfig(RunConfig);

/// Opaque run result.
pub struct LstoResult(RunResult, f64);

/// Last error message for the calling thread. Valid until the next failing
/// call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn lsto_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

/// Parses a configuration from the same `key = value` text format the CLI
/// reads. On success stores a new handle in `out`.
///
/// # Safety
/// `text` must be a valid NUL-terminated UTF-8 string and `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn lsto_config_parse(
    text: *const c_char,
    out: *mut *mut LstoConfig,
) -> LstoStatus {
    if out.is_null() {
        set_error("out pointer is null");
        return LstoStatus::InvalidArgument;
    }
    let Some(text) = cstr(text) else {
        set_error("config text is null or not UTF-8");
        return LstoStatus::InvalidArgument;
    };
    match parse_config(text) {
        Ok(cfg) => {
            *out = Box::into_raw(Box::new(LstoConfig(cfg)));
            LstoStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            *out = ptr::null_mut();
            status_of(&e)
        }
    }
}

/// Releases a configuration handle. Null is ignored.
///
/// # Safety
/// `cfg` must come from `lsto_config_parse` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lsto_config_free(cfg: *mut LstoConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the optimization. `adaptive != 0` interleaves mesh adaptation,
/// otherwise the mesh stays fixed. On success stores a result handle in
/// `out`.
///
/// # Safety
/// `cfg` must be a live configuration handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lsto_run(
    cfg: *const LstoConfig,
    adaptive: i32,
    out: *mut *mut LstoResult,
) -> LstoStatus {
    if cfg.is_null() || out.is_null() {
        set_error("null handle");
        return LstoStatus::InvalidArgument;
    }
    let cfg = &(*cfg).0;
    let run = if adaptive != 0 { run_adaptive } else { run_fixed };
    match run(cfg) {
        Ok(result) => {
            *out = Box::into_raw(Box::new(LstoResult(result, cfg.case.v0)));
            LstoStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            *out = ptr::null_mut();
            status_of(&e)
        }
    }
}

/// Releases a result handle. Null is ignored.
///
/// # Safety
/// `result` must come from `lsto_run` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lsto_result_free(result: *mut LstoResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

macro_rules! getter {
    ($name:ident, $ty:ty, $body:expr) => {
        /// # Safety
        /// `result` must be a live result handle.
        #[no_mangle]
        pub unsafe extern "C" fn $name(result: *const LstoResult) -> $ty {
            let f: fn(&LstoResult) -> $ty = $body;
            if result.is_null() {
                return Default::default();
            }
            f(&*result)
        }
    };
}

getter!(lsto_result_compliance, f64, |r| r.0.compliance);
getter!(lsto_result_volume_fraction, f64, |r| r.0.volume / r.1);
getter!(lsto_result_iterations, usize, |r| r.0.iterations);
getter!(lsto_result_converged, i32, |r| r.0.converged as i32);
getter!(lsto_result_element_count, usize, |r| r.0.mesh.n_triangles());

/// Writes `history.csv`, `mesh.vtk`, `layout.vtk` and `boundary.svg` into
/// `dir` (created if missing).
///
/// # Safety
/// `result` must be a live result handle; `dir` a NUL-terminated UTF-8 path.
#[no_mangle]
pub unsafe extern "C" fn lsto_result_write_outputs(
    result: *const LstoResult,
    dir: *const c_char,
) -> LstoStatus {
    if result.is_null() {
        set_error("null result handle");
        return LstoStatus::InvalidArgument;
    }
    let Some(dir) = cstr(dir) else {
        set_error("dir is null or not UTF-8");
        return LstoStatus::InvalidArgument;
    };
    let r = &*result;
    let layout = extract_layout(&r.0.mesh, &r.0.phi);
    match write_outputs(&r.0, &layout, r.1, &PathBuf::from(dir)) {
        Ok(()) => LstoStatus::Ok,
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}
