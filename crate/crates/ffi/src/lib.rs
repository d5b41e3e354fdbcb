//! C interface to `dualstop`.
//!
//! Problems live behind an opaque `DsProblem` handle. Every fallible call
//! returns a `DsStatus`; on failure the message is available from
//! `ds_last_error_message` on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dualstop::exact::exact_levels;
use dualstop::nested::{estimate_hk, estimate_opt_min};
use dualstop::oracles::backward_induction;
use dualstop::{
    builtin, Error, ExpansionOptions, FiniteTreeProcess, Framework, InnerScheme, PracticalCounts, SampleBudget,
    StoppingProblem, StreamKey,
};

/// Opaque problem handle.
pub struct DsProblem(StoppingProblem);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownProblem = 3,
    InvalidTree = 4,
    Invariant = 5,
    BudgetCeiling = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsFramework {
    Minimize = 0,
    Maximize = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsScheme {
    Tree = 0,
    Nested = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DsEstimate {
    pub value: f64,
    /// Negative when no standard error is available.
    pub std_error: f64,
    pub calls: u64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DsStatus {
    match e {
        Error::InvalidArgument(_) | Error::OutsideSupport { .. } | Error::TooLarge(_) => DsStatus::InvalidArgument,
        Error::UnknownProblem(_) => DsStatus::UnknownProblem,
        Error::InvalidTree(_) | Error::Json(_) => DsStatus::InvalidTree,
        Error::Invariant(_) | Error::ToleranceNotReached { .. } => DsStatus::Invariant,
        Error::BudgetCeiling { .. } => DsStatus::BudgetCeiling,
        Error::PolicyAborted { source, .. } => status_of(source),
        Error::Io(_) => DsStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), DsStatus>) -> DsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            DsStatus::Internal
        }
    }
}

fn lift<T>(r: dualstop::Result<T>) -> Result<T, DsStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn null() -> DsStatus {
    set_error("null pointer argument".into());
    DsStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, DsStatus> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not UTF-8".into());
        DsStatus::InvalidArgument
    })
}

unsafe fn problem_ref<'a>(p: *const DsProblem) -> Result<&'a StoppingProblem, DsStatus> {
    p.as_ref().map(|h| &h.0).ok_or_else(null)
}

unsafe fn counts_arg(p: *const usize, n: usize) -> Result<Vec<usize>, DsStatus> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, n).to_vec())
}

fn write_estimate(out: *mut DsEstimate, e: &dualstop::Estimate) {
    // SAFETY: callers check `out` for null first.
    unsafe {
        *out = DsEstimate {
            value: e.value,
            std_error: e.std_error.unwrap_or(-1.0),
            calls: e.calls,
            seed: e.seed,
        };
    }
}

/// Message of the last failed call on this thread; never null.
#[no_mangle]
pub extern "C" fn ds_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn ds_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a builtin problem such as `"two_point(2)"` or `"iid_uniform(4)"`.
///
/// # Safety
/// `spec` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ds_problem_builtin(spec: *const c_char, out: *mut *mut DsProblem) -> DsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let p = lift(builtin(str_arg(spec)?))?;
        *out = Box::into_raw(Box::new(DsProblem(p)));
        Ok(())
    })
}

/// Builds a problem from a JSON tree document.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ds_problem_from_tree_json(
    json: *const c_char,
    framework: DsFramework,
    out: *mut *mut DsProblem,
) -> DsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let tree = lift(FiniteTreeProcess::from_json_str(str_arg(json)?))?;
        let fw = match framework {
            DsFramework::Minimize => Framework::Minimize,
            DsFramework::Maximize => Framework::Maximize,
        };
        *out = Box::into_raw(Box::new(DsProblem(StoppingProblem::from_tree("tree", tree, fw))));
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `p` must come from one of the constructors and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ds_problem_free(p: *mut DsProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Horizon `T`, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_problem_horizon(p: *const DsProblem) -> usize {
    p.as_ref().map_or(0, |h| h.0.horizon())
}

/// Exact optimal value by backward induction; tree instances only.
///
/// # Safety
/// `p` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ds_exact_opt(p: *const DsProblem, out: *mut f64) -> DsStatus {
    guard(|| {
        let prob = problem_ref(p)?;
        if out.is_null() {
            return Err(null());
        }
        let tree = tree_of(prob)?;
        *out = lift(backward_induction(tree, prob.framework()))?.opt;
        Ok(())
    })
}

fn tree_of(p: &StoppingProblem) -> Result<&FiniteTreeProcess, DsStatus> {
    p.tree().map(|t| &**t).ok_or_else(|| {
        set_error("problem has no finite tree".into());
        DsStatus::InvalidArgument
    })
}

/// Exact terms `H_1..H_levels` written to `h_out`, which holds `levels` doubles.
///
/// # Safety
/// `p` must be a live handle and `h_out` valid for `levels` writes.
#[no_mangle]
pub unsafe extern "C" fn ds_exact_levels(p: *const DsProblem, levels: usize, h_out: *mut f64) -> DsStatus {
    guard(|| {
        let prob = problem_ref(p)?;
        if h_out.is_null() {
            return Err(null());
        }
        let lv = lift(exact_levels(tree_of(prob)?, levels))?;
        std::slice::from_raw_parts_mut(h_out, levels).copy_from_slice(lv.h_all());
        Ok(())
    })
}

/// Practical-mode estimate of the minimization value with one level per outer count.
///
/// # Safety
/// `p` must be a live handle, `outer`/`inner` valid for `n_outer`/`n_inner`
/// reads and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ds_estimate_opt_min_practical(
    p: *const DsProblem,
    outer: *const usize,
    n_outer: usize,
    inner: *const usize,
    n_inner: usize,
    scheme: DsScheme,
    seed: u64,
    out: *mut DsEstimate,
) -> DsStatus {
    guard(|| {
        let prob = problem_ref(p)?;
        if out.is_null() {
            return Err(null());
        }
        let scheme = match scheme {
            DsScheme::Tree => InnerScheme::Tree,
            DsScheme::Nested => InnerScheme::Nested,
        };
        let counts = lift(PracticalCounts::new(scheme, counts_arg(outer, n_outer)?, counts_arg(inner, n_inner)?))?;
        let budget = lift(SampleBudget::practical(0.1, 0.1, counts))?;
        let e = lift(estimate_opt_min(prob, &budget, None, &StreamKey::master(seed)))?;
        write_estimate(out, &e);
        Ok(())
    })
}

/// Strict-mode estimate of `H_k` at accuracy `(eps, delta)`; refused with
/// `BudgetCeiling` when more than `max_calls` simulator calls are predicted
/// (0 means no ceiling).
///
/// # Safety
/// `p` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ds_estimate_hk_strict(
    p: *const DsProblem,
    k: usize,
    eps: f64,
    delta: f64,
    max_calls: u64,
    seed: u64,
    out: *mut DsEstimate,
) -> DsStatus {
    guard(|| {
        let prob = problem_ref(p)?;
        if out.is_null() {
            return Err(null());
        }
        let budget = lift(SampleBudget::strict(eps, delta))?.with_max_calls((max_calls > 0).then_some(max_calls));
        let e = lift(estimate_hk(prob, k, &budget, ExpansionOptions::default(), &StreamKey::master(seed)))?;
        write_estimate(out, &e);
        Ok(())
    })
}
