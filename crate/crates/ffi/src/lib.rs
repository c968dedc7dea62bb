//! C ABI over the analysis library.
//!
//! Systems live behind an opaque [`QbaeSystem`] handle. Every fallible call
//! returns a [`QbaeStatus`]; on failure the message is kept per thread and
//! can be copied out with [`qbae_last_error_message`]. Complex matrices cross
//! the boundary as row-major arrays of interleaved `(re, im)` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;
use qbae::algebra::CMat;
use qbae::cli::SystemDescription;
use qbae::model::{quadrature_realization, SystemParams};
use qbae::transfer::{self, BlockSelector, Quad};
use qbae::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QbaeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    InvalidSystem = 4,
    DomainError = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Quadrature selector: 0 for q, 1 for p.
pub const QBAE_QUAD_Q: u32 = 0;
pub const QBAE_QUAD_P: u32 = 1;

/// Opaque handle to a validated linear quantum system.
pub struct QbaeSystem {
    params: SystemParams,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: QbaeStatus, msg: impl Into<String>) -> QbaeStatus {
    set_error(msg);
    status
}

fn domain(e: Error) -> QbaeStatus {
    let status = match e {
        Error::InvalidParams(_) | Error::Shape { .. } | Error::OddDimension { .. } => {
            QbaeStatus::InvalidArgument
        }
        _ => QbaeStatus::DomainError,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning a panic into [`QbaeStatus::Panic`].
fn guard(f: impl FnOnce() -> QbaeStatus) -> QbaeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(QbaeStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

fn quad(v: u32) -> Option<Quad> {
    match v {
        QBAE_QUAD_Q => Some(Quad::Q),
        QBAE_QUAD_P => Some(Quad::P),
        _ => None,
    }
}

/// # Safety
/// `data` must point to `2 * rows * cols` doubles or be null.
unsafe fn read_matrix(data: *const f64, rows: usize, cols: usize) -> Option<CMat> {
    if data.is_null() {
        return None;
    }
    let len = 2 * rows * cols;
    let s = std::slice::from_raw_parts(data, len);
    Some(CMat::from_fn(rows, cols, |i, j| {
        let k = 2 * (i * cols + j);
        Complex64::new(s[k], s[k + 1])
    }))
}

fn finish(params: SystemParams, out: *mut *mut QbaeSystem) -> QbaeStatus {
    let report = params.validate();
    if let Some(v) = report.violations.first() {
        return fail(
            QbaeStatus::InvalidSystem,
            format!("{}: {} (residual {:.3e})", v.field, v.message, v.residual),
        );
    }
    // SAFETY: checked non-null by the callers.
    unsafe { *out = Box::into_raw(Box::new(QbaeSystem { params })) };
    QbaeStatus::Ok
}

/// Builds a system from its five matrices. `s` is m×m, `c_minus` and
/// `c_plus` are m×n, `omega_minus` and `omega_plus` are n×n, each as
/// interleaved complex doubles. The system must pass validation.
///
/// # Safety
/// Each pointer must reference the number of doubles its shape implies and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qbae_system_new(
    n: usize,
    m: usize,
    s: *const f64,
    c_minus: *const f64,
    c_plus: *const f64,
    omega_minus: *const f64,
    omega_plus: *const f64,
    out: *mut *mut QbaeSystem,
) -> QbaeStatus {
    guard(|| {
        if out.is_null() {
            return fail(QbaeStatus::NullPointer, "out is null");
        }
        if n == 0 || m == 0 {
            return fail(QbaeStatus::InvalidArgument, "n and m must be positive");
        }
        let mats = (
            read_matrix(s, m, m),
            read_matrix(c_minus, m, n),
            read_matrix(c_plus, m, n),
            read_matrix(omega_minus, n, n),
            read_matrix(omega_plus, n, n),
        );
        let (Some(s), Some(cm), Some(cp), Some(om), Some(op)) = mats else {
            return fail(QbaeStatus::NullPointer, "matrix pointer is null");
        };
        match SystemParams::new(s, cm, cp, om, op) {
            Ok(p) => finish(p, out),
            Err(e) => domain(e),
        }
    })
}

/// Builds a system from a JSON system description.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qbae_system_from_json(
    json: *const c_char,
    out: *mut *mut QbaeSystem,
) -> QbaeStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(QbaeStatus::NullPointer, "json or out is null");
        }
        let Ok(text) = CStr::from_ptr(json).to_str() else {
            return fail(QbaeStatus::ParseError, "description is not UTF-8");
        };
        let desc = match SystemDescription::parse(text) {
            Ok(d) => d,
            Err(e) => return fail(QbaeStatus::ParseError, e.to_string()),
        };
        match desc.system() {
            Ok(p) => finish(p, out),
            Err(e) => fail(QbaeStatus::ParseError, e.to_string()),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sys` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qbae_system_free(sys: *mut QbaeSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// # Safety
/// `sys` must be a live handle; `n` and `m` writable.
#[no_mangle]
pub unsafe extern "C" fn qbae_system_dims(
    sys: *const QbaeSystem,
    n: *mut usize,
    m: *mut usize,
) -> QbaeStatus {
    guard(|| {
        if sys.is_null() || n.is_null() || m.is_null() {
            return fail(QbaeStatus::NullPointer, "null argument");
        }
        let p = &(*sys).params;
        *n = p.n();
        *m = p.m();
        QbaeStatus::Ok
    })
}

/// Certifies that the transfer block from `input` to `output` vanishes.
/// `tol <= 0` selects the default tolerance.
///
/// # Safety
/// `sys` must be a live handle; `verdict` and `residual` writable.
#[no_mangle]
pub unsafe extern "C" fn qbae_certify_block(
    sys: *const QbaeSystem,
    output: u32,
    input: u32,
    tol: f64,
    verdict: *mut c_int,
    residual: *mut f64,
) -> QbaeStatus {
    guard(|| {
        if sys.is_null() || verdict.is_null() || residual.is_null() {
            return fail(QbaeStatus::NullPointer, "null argument");
        }
        let (Some(o), Some(i)) = (quad(output), quad(input)) else {
            return fail(
                QbaeStatus::InvalidArgument,
                "quadrature must be 0 (q) or 1 (p)",
            );
        };
        let tol = if tol > 0.0 { tol } else { qbae::bae::CERT_TOL };
        let real = match quadrature_realization(&(*sys).params) {
            Ok(r) => r,
            Err(e) => return domain(e),
        };
        let c = transfer::certify_zero_block(&real, BlockSelector::new(o, i), tol);
        *verdict = c_int::from(c.verdict);
        *residual = c.max_residual;
        QbaeStatus::Ok
    })
}

/// Writes G(s) in quadrature form, (2m)×(2m) interleaved complex doubles,
/// into `buf`. `len` is the capacity in doubles; `needed` receives the
/// required count even when the buffer is too small.
///
/// # Safety
/// `sys` must be a live handle, `buf` valid for `len` doubles and `needed`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn qbae_transfer(
    sys: *const QbaeSystem,
    s_re: f64,
    s_im: f64,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> QbaeStatus {
    guard(|| {
        if sys.is_null() || needed.is_null() {
            return fail(QbaeStatus::NullPointer, "null argument");
        }
        let p = &(*sys).params;
        let dim = 2 * p.m();
        *needed = 2 * dim * dim;
        if buf.is_null() || len < *needed {
            return fail(
                QbaeStatus::BufferTooSmall,
                format!("transfer needs {} doubles", *needed),
            );
        }
        let g = match quadrature_realization(p)
            .and_then(|r| transfer::evaluate(&r, Complex64::new(s_re, s_im)))
        {
            Ok(g) => g,
            Err(e) => return domain(e),
        };
        let out = std::slice::from_raw_parts_mut(buf, *needed);
        for i in 0..dim {
            for j in 0..dim {
                let k = 2 * (i * dim + j);
                out[k] = g[(i, j)].re;
                out[k + 1] = g[(i, j)].im;
            }
        }
        QbaeStatus::Ok
    })
}

/// Runs the structural BAE analysis: `predictions` receives the number of
/// predicted zero blocks and `confirmed` whether all were certified.
///
/// # Safety
/// `sys` must be a live handle; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn qbae_bae_analyze(
    sys: *const QbaeSystem,
    predictions: *mut usize,
    confirmed: *mut c_int,
) -> QbaeStatus {
    guard(|| {
        if sys.is_null() || predictions.is_null() || confirmed.is_null() {
            return fail(QbaeStatus::NullPointer, "null argument");
        }
        match qbae::bae::analyze(&(*sys).params) {
            Ok(r) => {
                *predictions = r.predictions.len();
                *confirmed = c_int::from(r.confirmed());
                QbaeStatus::Ok
            }
            Err(e) => domain(e),
        }
    })
}

/// Tests [L, H] = 0. `tol <= 0` selects the default tolerance.
///
/// # Safety
/// `sys` must be a live handle; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn qbae_qnd_interaction(
    sys: *const QbaeSystem,
    tol: f64,
    verdict: *mut c_int,
    residual: *mut f64,
) -> QbaeStatus {
    guard(|| {
        if sys.is_null() || verdict.is_null() || residual.is_null() {
            return fail(QbaeStatus::NullPointer, "null argument");
        }
        let tol = if tol > 0.0 { tol } else { qbae::qnd::QND_TOL };
        let t = qbae::qnd::qnd_interaction_test(&(*sys).params, tol);
        *verdict = c_int::from(t.verdict());
        *residual = t.pair_residual;
        QbaeStatus::Ok
    })
}

/// Copies the calling thread's last error message into `buf` with a
/// terminating NUL, truncating if needed. Returns the full message length
/// in bytes, excluding the NUL.
///
/// # Safety
/// `buf` must be valid for `len` bytes, or null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn qbae_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qbae_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
