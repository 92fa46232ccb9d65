//! C ABI for the core optimizer library: opaque handles, status codes,
//! and a thread-local last-error message. The companion header is
//! generated into `include/clipgrad.h` at build time.

use clipgrad::harness::{theorem_bound, TheoremId};
use clipgrad::objective::parse_objective;
use clipgrad::optimizer::{run, RunOptions, StepRule, Termination, Trajectory};
use clipgrad::oracle::{NoiseDistribution, NoiseModel};
use clipgrad::smoothness::estimate_local_smoothness;
use clipgrad::SmoothnessConstants;
use libc::{c_char, size_t};
use std::cell::RefCell;
use std::ffi::{CStr, CString};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStatus {
    CgOk = 0,
    CgNullPointer = 1,
    CgInvalidArgument = 2,
    CgRuntimeError = 3,
}

/// Opaque objective handle.
pub struct CgObjective {
    inner: clipgrad::Objective,
}

/// Opaque trajectory handle.
pub struct CgTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap());
}

fn fail(msg: impl Into<String>, status: CgStatus) -> CgStatus {
    set_error(msg);
    status
}

/// Message describing the most recent failure on this thread. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds an objective from a catalog id such as `quartic`,
/// `exp_worstcase:L1=2.0`, `slow_growth:eps=0.1` or `poly:0,0,0,0,1`.
/// Returns null on error; see [`cg_last_error_message`].
///
/// # Safety
/// `id` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cg_objective_new_from_id(id: *const c_char) -> *mut CgObjective {
    if id.is_null() {
        set_error("objective id pointer is null");
        return std::ptr::null_mut();
    }
    let id = match CStr::from_ptr(id).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("objective id is not valid UTF-8");
            return std::ptr::null_mut();
        }
    };
    match parse_objective(id) {
        Ok(inner) => Box::into_raw(Box::new(CgObjective { inner })),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Releases an objective handle. Null is ignored.
///
/// # Safety
/// `obj` must be a pointer previously returned by
/// [`cg_objective_new_from_id`] and not freed since.
#[no_mangle]
pub unsafe extern "C" fn cg_objective_free(obj: *mut CgObjective) {
    if !obj.is_null() {
        drop(Box::from_raw(obj));
    }
}

/// Dimension of the objective's domain; 0 for a null handle.
///
/// # Safety
/// `obj` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cg_objective_dim(obj: *const CgObjective) -> size_t {
    obj.as_ref().map_or(0, |o| o.inner.dim())
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: size_t) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

/// Evaluates the objective. `x` must have `len == cg_objective_dim`.
///
/// # Safety
/// `obj` must be a live handle; `x` must point to `len` doubles and
/// `out` to one.
#[no_mangle]
pub unsafe extern "C" fn cg_objective_eval(
    obj: *const CgObjective,
    x: *const f64,
    len: size_t,
    out: *mut f64,
) -> CgStatus {
    let Some(obj) = obj.as_ref() else {
        return fail("objective handle is null", CgStatus::CgNullPointer);
    };
    if out.is_null() {
        return fail("output pointer is null", CgStatus::CgNullPointer);
    }
    let Some(x) = slice_arg(x, len) else {
        return fail("input pointer is null", CgStatus::CgNullPointer);
    };
    if x.len() != obj.inner.dim() {
        return fail(
            format!("expected {} components, got {}", obj.inner.dim(), x.len()),
            CgStatus::CgInvalidArgument,
        );
    }
    *out = obj.inner.eval(x);
    CgStatus::CgOk
}

/// Writes the gradient into `out` (`len` doubles).
///
/// # Safety
/// `obj` must be a live handle; `x` and `out` must point to `len`
/// doubles each.
#[no_mangle]
pub unsafe extern "C" fn cg_objective_grad(
    obj: *const CgObjective,
    x: *const f64,
    len: size_t,
    out: *mut f64,
) -> CgStatus {
    let Some(obj) = obj.as_ref() else {
        return fail("objective handle is null", CgStatus::CgNullPointer);
    };
    let Some(x) = slice_arg(x, len) else {
        return fail("input pointer is null", CgStatus::CgNullPointer);
    };
    if out.is_null() {
        return fail("output pointer is null", CgStatus::CgNullPointer);
    }
    if x.len() != obj.inner.dim() {
        return fail(
            format!("expected {} components, got {}", obj.inner.dim(), x.len()),
            CgStatus::CgInvalidArgument,
        );
    }
    let g = obj.inner.grad(x);
    std::ptr::copy_nonoverlapping(g.as_ptr(), out, g.len());
    CgStatus::CgOk
}

/// Runs a step rule given in text form (e.g.
/// `clipped_gd{eta_c=1,gamma=0.01}`). A positive `tau` configures a
/// uniform-ball noise oracle with the given seed; stochastic rules
/// require it. Returns null on error.
///
/// # Safety
/// `obj` must be a live handle, `rule` a valid NUL-terminated string and
/// `x0` a pointer to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cg_run(
    obj: *const CgObjective,
    rule: *const c_char,
    x0: *const f64,
    len: size_t,
    budget: u64,
    eps: f64,
    tau: f64,
    noise_seed: u64,
    run_index: u64,
) -> *mut CgTrajectory {
    let Some(obj) = obj.as_ref() else {
        set_error("objective handle is null");
        return std::ptr::null_mut();
    };
    if rule.is_null() {
        set_error("rule pointer is null");
        return std::ptr::null_mut();
    }
    let rule_text = match CStr::from_ptr(rule).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("rule is not valid UTF-8");
            return std::ptr::null_mut();
        }
    };
    let rule: StepRule = match rule_text.parse() {
        Ok(r) => r,
        Err(e) => {
            set_error(e.to_string());
            return std::ptr::null_mut();
        }
    };
    let Some(x0) = slice_arg(x0, len) else {
        set_error("x0 pointer is null");
        return std::ptr::null_mut();
    };
    let noise = if tau > 0.0 {
        match NoiseModel::new(tau, NoiseDistribution::UniformBall, noise_seed) {
            Ok(n) => Some(n),
            Err(e) => {
                set_error(e.to_string());
                return std::ptr::null_mut();
            }
        }
    } else {
        None
    };
    let opts = RunOptions::new(budget, eps);
    match run(&rule, &obj.inner, x0, &opts, noise.as_ref(), run_index) {
        Ok(inner) => Box::into_raw(Box::new(CgTrajectory { inner })),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Releases a trajectory handle. Null is ignored.
///
/// # Safety
/// `traj` must be a pointer previously returned by [`cg_run`] and not
/// freed since.
#[no_mangle]
pub unsafe extern "C" fn cg_trajectory_free(traj: *mut CgTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of steps taken; 0 for a null handle.
///
/// # Safety
/// `traj` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cg_trajectory_total_steps(traj: *const CgTrajectory) -> u64 {
    traj.as_ref().map_or(0, |t| t.inner.total_steps)
}

/// Termination reason: 0 budget, 1 eps reached, 2 diverged; -1 for a
/// null handle.
///
/// # Safety
/// `traj` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cg_trajectory_terminated_by(traj: *const CgTrajectory) -> i32 {
    match traj.as_ref() {
        None => -1,
        Some(t) => match t.inner.terminated_by {
            Termination::Budget => 0,
            Termination::EpsReached => 1,
            Termination::Diverged => 2,
        },
    }
}

/// Final objective value; NaN for a null handle.
///
/// # Safety
/// `traj` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cg_trajectory_final_f(traj: *const CgTrajectory) -> f64 {
    traj.as_ref().map_or(f64::NAN, |t| t.inner.final_f)
}

/// Final gradient norm; NaN for a null handle.
///
/// # Safety
/// `traj` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cg_trajectory_final_grad_norm(traj: *const CgTrajectory) -> f64 {
    traj.as_ref().map_or(f64::NAN, |t| t.inner.final_grad_norm)
}

/// First step index with gradient norm at most `eps`. Returns true and
/// fills `out` when such a step exists, false otherwise.
///
/// # Safety
/// `traj` must be a live handle; `out` must point to a u64.
#[no_mangle]
pub unsafe extern "C" fn cg_trajectory_first_hit(
    traj: *const CgTrajectory,
    eps: f64,
    out: *mut u64,
) -> bool {
    let Some(traj) = traj.as_ref() else {
        set_error("trajectory handle is null");
        return false;
    };
    if out.is_null() {
        set_error("output pointer is null");
        return false;
    }
    match traj.inner.first_hit(eps) {
        Some(t) => {
            *out = t;
            true
        }
        None => false,
    }
}

/// Local smoothness estimate along the displacement between `x_k` and
/// `x_k1` over the gamma grid with spacing `delta`.
///
/// # Safety
/// `obj` must be a live handle; `x_k` and `x_k1` must point to `len`
/// doubles, `out` to one.
#[no_mangle]
pub unsafe extern "C" fn cg_estimate_local_smoothness(
    obj: *const CgObjective,
    x_k: *const f64,
    x_k1: *const f64,
    len: size_t,
    delta: f64,
    out: *mut f64,
) -> CgStatus {
    let Some(obj) = obj.as_ref() else {
        return fail("objective handle is null", CgStatus::CgNullPointer);
    };
    let (Some(a), Some(b)) = (slice_arg(x_k, len), slice_arg(x_k1, len)) else {
        return fail("input pointer is null", CgStatus::CgNullPointer);
    };
    if out.is_null() {
        return fail("output pointer is null", CgStatus::CgNullPointer);
    }
    match estimate_local_smoothness(&obj.inner, a, b, delta) {
        Ok(l) => {
            *out = l;
            CgStatus::CgOk
        }
        Err(e) => fail(e.to_string(), CgStatus::CgInvalidArgument),
    }
}

/// Closed-form complexity bound. `theorem_id` is one of `thm3`,
/// `thm4_lower`, `thm5`, `thm6`, `thm7`; pass NaN for `m` or `tau` when
/// absent.
///
/// # Safety
/// `theorem_id` must be a valid NUL-terminated string; `out` must point
/// to a double.
#[no_mangle]
pub unsafe extern "C" fn cg_theorem_bound(
    theorem_id: *const c_char,
    l0: f64,
    l1: f64,
    m: f64,
    tau: f64,
    delta_f: f64,
    eps: f64,
    out: *mut f64,
) -> CgStatus {
    if theorem_id.is_null() || out.is_null() {
        return fail("null pointer argument", CgStatus::CgNullPointer);
    }
    let id = match CStr::from_ptr(theorem_id).to_str() {
        Ok(s) => s,
        Err(_) => return fail("theorem id is not valid UTF-8", CgStatus::CgInvalidArgument),
    };
    let id: TheoremId = match id.parse() {
        Ok(t) => t,
        Err(e) => return fail(e.to_string(), CgStatus::CgInvalidArgument),
    };
    let constants = match SmoothnessConstants::new(l0, l1) {
        Ok(c) => c,
        Err(e) => return fail(e.to_string(), CgStatus::CgInvalidArgument),
    };
    let m = (!m.is_nan()).then_some(m);
    let tau = (!tau.is_nan()).then_some(tau);
    match theorem_bound(id, &constants, delta_f, eps, tau, m) {
        Ok(b) => {
            *out = b;
            CgStatus::CgOk
        }
        Err(e) => fail(e.to_string(), CgStatus::CgInvalidArgument),
    }
}
