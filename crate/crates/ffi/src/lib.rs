//! C interface: opaque problem and result handles, integer status codes and a
//! thread-local last-error message.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ascontrol::grid::{preset_problem, DiscreteProblem, Velocity};
use ascontrol::kkt::KktPoint;
use ascontrol::newton::{newton_solve, Forcing, Method, NewtonOptions, NewtonTrace, Outcome};
use ascontrol::Error;

/// Discretized problem instance.
pub struct AscProblem {
    inner: DiscreteProblem,
}

/// Solution and iteration statistics of one Newton run.
pub struct AscResult {
    point: KktPoint,
    trace: NewtonTrace,
}

#[allow(non_camel_case_types)]
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AscStatus {
    ASC_OK = 0,
    ASC_NULL_POINTER = 1,
    ASC_INVALID_ARGUMENT = 2,
    ASC_UNSUPPORTED = 3,
    ASC_SOLVER_ERROR = 4,
    ASC_BUFFER_TOO_SMALL = 5,
    ASC_PANIC = 6,
}

pub const ASC_METHOD_GMRES_IPF: i32 = 0;
pub const ASC_METHOD_MINRES_BDF: i32 = 1;
pub const ASC_METHOD_BPCG_BT: i32 = 2;

pub const ASC_FORCING_EXACT: i32 = 0;
pub const ASC_FORCING_INEXACT: i32 = 1;

pub const ASC_OUTCOME_CONVERGED: i32 = 0;
pub const ASC_OUTCOME_MAX_ITERATIONS: i32 = 1;
pub const ASC_OUTCOME_LINEAR_FAILURE: i32 = 2;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: AscStatus, msg: impl Into<String>) -> AscStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> AscStatus {
    match e {
        Error::Unsupported(_) | Error::TooLarge(..) => AscStatus::ASC_UNSUPPORTED,
        Error::InvalidGrid(_) | Error::InvalidProblem(_) | Error::UnknownPreset(_) | Error::Config(_) => {
            AscStatus::ASC_INVALID_ARGUMENT
        }
        _ => AscStatus::ASC_SOLVER_ERROR,
    }
}

fn guarded(f: impl FnOnce() -> AscStatus) -> AscStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(AscStatus::ASC_PANIC, "internal panic"))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn asc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a preset problem (`"CC-Pb1"`, `"CC-Pb2"`, `"MC-Pb1"`, `"SC-Pb1"`)
/// with convection `(beta1, 0, 0)`. `eps` is used by `MC-Pb1` only.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn asc_problem_new_preset(
    name: *const c_char,
    level: u32,
    nu: f64,
    beta1: f64,
    eps: f64,
    out: *mut *mut AscProblem,
) -> AscStatus {
    guarded(|| {
        if name.is_null() || out.is_null() {
            return fail(AscStatus::ASC_NULL_POINTER, "null argument");
        }
        *out = ptr::null_mut();
        let Ok(name) = CStr::from_ptr(name).to_str() else {
            return fail(AscStatus::ASC_INVALID_ARGUMENT, "preset name is not UTF-8");
        };
        match preset_problem(name, level as usize, nu, Velocity::Constant([beta1, 0.0, 0.0]), eps) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(AscProblem { inner: p }));
                AscStatus::ASC_OK
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `problem` must be null or come from `asc_problem_new_preset`, freed once.
#[no_mangle]
pub unsafe extern "C" fn asc_problem_free(problem: *mut AscProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of grid nodes, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn asc_problem_size(problem: *const AscProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.n())
}

/// Runs the semismooth Newton method. `method` is one of `ASC_METHOD_*`,
/// `forcing` one of `ASC_FORCING_*`. A run that stops without converging still
/// returns `ASC_OK`; query `asc_result_outcome`.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn asc_solve(problem: *const AscProblem, method: i32, forcing: i32, out: *mut *mut AscResult) -> AscStatus {
    guarded(|| {
        let Some(problem) = problem.as_ref() else {
            return fail(AscStatus::ASC_NULL_POINTER, "null problem");
        };
        if out.is_null() {
            return fail(AscStatus::ASC_NULL_POINTER, "null output pointer");
        }
        *out = ptr::null_mut();
        let method = match method {
            ASC_METHOD_GMRES_IPF => Method::GmresIpf,
            ASC_METHOD_MINRES_BDF => Method::MinresBdf,
            ASC_METHOD_BPCG_BT => Method::BpcgBt,
            m => return fail(AscStatus::ASC_INVALID_ARGUMENT, format!("unknown method {m}")),
        };
        let forcing = match forcing {
            ASC_FORCING_EXACT => Forcing::Exact,
            ASC_FORCING_INEXACT => Forcing::Inexact,
            f => return fail(AscStatus::ASC_INVALID_ARGUMENT, format!("unknown forcing {f}")),
        };
        match newton_solve(&problem.inner, &NewtonOptions::new(method, forcing)) {
            Ok((point, trace)) => {
                *out = Box::into_raw(Box::new(AscResult { point, trace }));
                AscStatus::ASC_OK
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `result` must be null or come from `asc_solve`, freed once.
#[no_mangle]
pub unsafe extern "C" fn asc_result_free(result: *mut AscResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// One of `ASC_OUTCOME_*`, or -1 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn asc_result_outcome(result: *const AscResult) -> i32 {
    result.as_ref().map_or(-1, |r| match r.trace.outcome {
        Outcome::Converged => ASC_OUTCOME_CONVERGED,
        Outcome::MaxIterations => ASC_OUTCOME_MAX_ITERATIONS,
        Outcome::LinearFailure => ASC_OUTCOME_LINEAR_FAILURE,
    })
}

/// Number of Newton iterations (linear solves).
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn asc_result_newton_iterations(result: *const AscResult) -> usize {
    result.as_ref().map_or(0, |r| r.trace.nli())
}

/// Mean Krylov iterations per Newton iteration; NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn asc_result_mean_linear_iterations(result: *const AscResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.trace.mean_li())
}

/// Final nonlinear residual norm; NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn asc_result_kkt_norm(result: *const AscResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.trace.final_kkt_norm())
}

unsafe fn copy_out(result: *const AscResult, pick: fn(&KktPoint) -> &[f64], buf: *mut f64, len: usize) -> AscStatus {
    let Some(r) = result.as_ref() else {
        return fail(AscStatus::ASC_NULL_POINTER, "null result");
    };
    let v = pick(&r.point);
    if buf.is_null() {
        return fail(AscStatus::ASC_NULL_POINTER, "null buffer");
    }
    if len < v.len() {
        return fail(AscStatus::ASC_BUFFER_TOO_SMALL, format!("buffer holds {len} values, need {}", v.len()));
    }
    ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
    AscStatus::ASC_OK
}

/// Copies the state y (one value per grid node) into `buf`.
///
/// # Safety
/// `result` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn asc_result_copy_state(result: *const AscResult, buf: *mut f64, len: usize) -> AscStatus {
    copy_out(result, |p| &p.y, buf, len)
}

/// Copies the control u into `buf`.
///
/// # Safety
/// `result` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn asc_result_copy_control(result: *const AscResult, buf: *mut f64, len: usize) -> AscStatus {
    copy_out(result, |p| &p.u, buf, len)
}

/// Copies the adjoint p into `buf`.
///
/// # Safety
/// `result` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn asc_result_copy_adjoint(result: *const AscResult, buf: *mut f64, len: usize) -> AscStatus {
    copy_out(result, |p| &p.p, buf, len)
}

/// Copies the multiplier μ into `buf`.
///
/// # Safety
/// `result` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn asc_result_copy_multiplier(result: *const AscResult, buf: *mut f64, len: usize) -> AscStatus {
    copy_out(result, |p| &p.mu, buf, len)
}
