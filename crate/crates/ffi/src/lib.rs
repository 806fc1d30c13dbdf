//! C ABI over `wefix-core`.
//!
//! Every function returns a [`WefixStatus`]; on failure the message is
//! available from [`wefix_last_error`] on the same thread. Strings handed
//! out by the library are NUL-terminated UTF-8 and must be released with
//! [`wefix_string_free`]; logs with [`wefix_log_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wefix_core::analyzer::{compute_stats, prune_log, BackgroundConfig};
use wefix_core::trace::{parse_log, serialize_log, MutationLog};
use wefix_core::transform::{fix_source, instrument_recording, strip_hooks, FixOptions};
use wefix_core::window::compute_window;
use wefix_core::Dialect;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WefixStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ParseError = 4,
    TransformError = 5,
    AnalyzeError = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WefixDialect {
    Cypress = 0,
    Selenium = 1,
}

impl From<WefixDialect> for Dialect {
    fn from(d: WefixDialect) -> Self {
        match d {
            WefixDialect::Cypress => Dialect::Cypress,
            WefixDialect::Selenium => Dialect::SeleniumWebdriver,
        }
    }
}

/// A parsed mutation log.
pub struct WefixLog {
    inner: MutationLog,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(WefixStatus, String);

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', "\\0")).expect("NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Run `f`, turning failures and panics into a status plus last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> WefixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            WefixStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal error: {msg}"));
            WefixStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(WefixStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(WefixStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(WefixStatus::NullArgument, format!("{what} is null")))
}

unsafe fn log_arg<'a>(p: *const WefixLog) -> Result<&'a MutationLog, Failure> {
    p.as_ref()
        .map(|l| &l.inner)
        .ok_or_else(|| Failure(WefixStatus::NullArgument, "log is null".into()))
}

fn into_c(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(WefixStatus::InvalidArgument, "result contains a NUL byte".into()))
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn wefix_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn wefix_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wefix_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse `len` bytes of mutation log text.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wefix_log_parse(data: *const u8, len: usize, out: *mut *mut WefixLog) -> WefixStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        if data.is_null() && len > 0 {
            return Err(Failure(WefixStatus::NullArgument, "data is null".into()));
        }
        let bytes = if len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(data, len)
        };
        let inner = parse_log(bytes).map_err(|e| Failure(WefixStatus::ParseError, e.to_string()))?;
        *out = Box::into_raw(Box::new(WefixLog { inner }));
        Ok(())
    })
}

/// # Safety
/// `log` must come from [`wefix_log_parse`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wefix_log_free(log: *mut WefixLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}

/// Number of command spans; 0 for null.
///
/// # Safety
/// `log` must be null or a live log.
#[no_mangle]
pub unsafe extern "C" fn wefix_log_span_count(log: *const WefixLog) -> usize {
    log.as_ref().map_or(0, |l| l.inner.spans.len())
}

/// Number of mutation records; 0 for null.
///
/// # Safety
/// `log` must be null or a live log.
#[no_mangle]
pub unsafe extern "C" fn wefix_log_mutation_count(log: *const WefixLog) -> usize {
    log.as_ref().map_or(0, |l| l.inner.mutation_count())
}

/// Canonical log text.
///
/// # Safety
/// `log` must be a live log; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wefix_log_serialize(log: *const WefixLog, out: *mut *mut c_char) -> WefixStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = String::from_utf8(serialize_log(log_arg(log)?)).expect("log text is UTF-8");
        *out = into_c(text)?;
        Ok(())
    })
}

/// Prune the log and write suite statistics as a JSON object.
///
/// # Safety
/// `log` must be a live log; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wefix_analyze(log: *const WefixLog, out_json: *mut *mut c_char) -> WefixStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        *out = ptr::null_mut();
        let pruned = prune_log(log_arg(log)?, None, &BackgroundConfig::default());
        let stats = compute_stats(&pruned.log).map_err(|e| Failure(WefixStatus::AnalyzeError, e.to_string()))?;
        *out = into_c(serde_json::to_string(&stats).expect("stats serialize"))?;
        Ok(())
    })
}

/// Final listen window in seconds for sorted event times (seconds after
/// settle).
///
/// # Safety
/// `events` must point to `n` readable doubles; `out_omega_s` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wefix_compute_window(events: *const f64, n: usize, out_omega_s: *mut f64) -> WefixStatus {
    guard(|| {
        let out = out_arg(out_omega_s, "out_omega_s")?;
        if events.is_null() && n > 0 {
            return Err(Failure(WefixStatus::NullArgument, "events is null".into()));
        }
        let ev = if n == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(events, n)
        };
        let w = compute_window(ev).map_err(|e| Failure(WefixStatus::InvalidArgument, e.to_string()))?;
        *out = w.omega_final_s;
        Ok(())
    })
}

/// Add recording hooks to a test source. `file` labels hook locations.
///
/// # Safety
/// `source` and `file` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wefix_instrument(
    source: *const c_char,
    dialect: WefixDialect,
    file: *const c_char,
    out: *mut *mut c_char,
) -> WefixStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let (src, file) = (str_arg(source, "source")?, str_arg(file, "file")?);
        let inst = instrument_recording(src, dialect.into(), file)
            .map_err(|e| Failure(WefixStatus::TransformError, e.in_file(file).to_string()))?;
        *out = into_c(inst.text)?;
        Ok(())
    })
}

/// Remove every inserted region.
///
/// # Safety
/// `source` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wefix_strip(source: *const c_char, out: *mut *mut c_char) -> WefixStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text =
            strip_hooks(str_arg(source, "source")?).map_err(|e| Failure(WefixStatus::TransformError, e.to_string()))?;
        *out = into_c(text)?;
        Ok(())
    })
}

/// Insert explicit waits after the flaky-prone commands of `log` that map
/// to sites of `source`, with default oracle settings. `out_waits` may be
/// null; otherwise it receives the number of inserted waits.
///
/// # Safety
/// Strings must be NUL-terminated, `log` live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wefix_fix(
    source: *const c_char,
    dialect: WefixDialect,
    file: *const c_char,
    log: *const WefixLog,
    out: *mut *mut c_char,
    out_waits: *mut usize,
) -> WefixStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let (src, file) = (str_arg(source, "source")?, str_arg(file, "file")?);
        let (text, outcome) = fix_source(file, src, dialect.into(), log_arg(log)?, &FixOptions::default())
            .map_err(|e| Failure(WefixStatus::TransformError, e.to_string()))?;
        if let Some(n) = out_waits.as_mut() {
            *n = outcome.entries.len();
        }
        *out = into_c(text)?;
        Ok(())
    })
}
