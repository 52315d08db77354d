//! C ABI over `l1stab`.
//!
//! Every entry point returns an [`L1StabStatus`]. On failure the message is
//! kept in a thread-local slot readable through [`l1stab_last_error`].
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Panics never unwind into C: they are
//! caught and reported as [`L1StabStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use l1stab::geometry::internal_angle;
use l1stab::harness::{render, run_experiment, ExperimentConfig, OutputFormat};
use l1stab::recovery::reweighted_recover;
use l1stab::solver::{solve_weighted_l1, SolveStatus};
use l1stab::stability::{scaling_constant, stability_factor};
use l1stab::{Error, WeightedL1Problem};
use nalgebra::DMatrix;

/// Result codes shared by all functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum L1StabStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad argument: out of domain, wrong shape, malformed config.
    InvalidArgument = 2,
    NonFinite = 3,
    RankDeficient = 4,
    Infeasible = 5,
    TooLarge = 6,
    /// Numerical failure inside the library.
    Numerical = 7,
    Io = 8,
    /// A Rust panic was caught at the boundary.
    Panic = 9,
}

/// Solver exit state reported by [`l1stab_solution_info`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum L1StabSolveStatus {
    Converged = 0,
    MaxIters = 1,
    Infeasible = 2,
}

/// Output encoding for [`l1stab_run_experiment`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum L1StabFormat {
    Csv = 0,
    Json = 1,
}

/// Weighted l1 instance `min sum w_i |z_i|  s.t.  A z = y`.
pub struct L1StabProblem(WeightedL1Problem);

/// Solver output.
pub struct L1StabSolution {
    z: Vec<f64>,
    objective: f64,
    lower_bound: f64,
    residual: f64,
    iterations: usize,
    status: SolveStatus,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> L1StabStatus {
    match err {
        Error::Domain(_) | Error::Dimension(_) | Error::Config(_) => L1StabStatus::InvalidArgument,
        Error::NonFinite(_) => L1StabStatus::NonFinite,
        Error::RankDeficient { .. } => L1StabStatus::RankDeficient,
        Error::Infeasible => L1StabStatus::Infeasible,
        Error::TooLarge(_) => L1StabStatus::TooLarge,
        Error::KappaInfinite | Error::Numerical(_) => L1StabStatus::Numerical,
        Error::Io { .. } => L1StabStatus::Io,
        Error::Stage { source, .. } => status_of(source),
        #[allow(unreachable_patterns)]
        _ => L1StabStatus::Numerical,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, records any failure and converts it to a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> L1StabStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => L1StabStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            L1StabStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            L1StabStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: checked non-null; the caller guarantees it is writable
    unsafe { p.as_mut() }.ok_or(Failure::Null(what))
}

/// Message of the last failure on this thread, or null when the last call
/// succeeded. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn l1stab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn l1stab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a problem from a row-major `m x n` matrix, `m` measurements and
/// optional `n` weights (null means all ones).
///
/// # Safety
/// `a` must point to `m * n` doubles, `y` to `m`, `weights` to `n` or be
/// null, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn l1stab_problem_new(
    m: usize,
    n: usize,
    a: *const f64,
    y: *const f64,
    weights: *const f64,
    out: *mut *mut L1StabProblem,
) -> L1StabStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let len = m
            .checked_mul(n)
            .ok_or_else(|| Error::Dimension(format!("{m} x {n} overflows")))?;
        let a = slice(a, len, "a")?;
        let y = slice(y, m, "y")?.to_vec();
        let mat = DMatrix::from_row_slice(m, n, a);
        let p = if weights.is_null() {
            WeightedL1Problem::unweighted(mat, y)?
        } else {
            WeightedL1Problem::new(mat, y, slice(weights, n, "weights")?.to_vec())?
        };
        *out = Box::into_raw(Box::new(L1StabProblem(p)));
        Ok(())
    })
}

/// Releases a problem. Null is ignored.
///
/// # Safety
/// `p` must come from [`l1stab_problem_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn l1stab_problem_free(p: *mut L1StabProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Solves `problem`. `tol <= 0` and `max_iters == 0` select the defaults.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn l1stab_solve(
    problem: *const L1StabProblem,
    tol: f64,
    max_iters: usize,
    out: *mut *mut L1StabSolution,
) -> L1StabStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let p = problem.as_ref().ok_or(Failure::Null("problem"))?;
        let tol = if tol > 0.0 {
            tol
        } else {
            l1stab::solver::DEFAULT_TOL
        };
        let iters = if max_iters > 0 {
            max_iters
        } else {
            l1stab::solver::DEFAULT_MAX_ITERS
        };
        let r = solve_weighted_l1(&p.0, tol, iters)?;
        *out = Box::into_raw(Box::new(L1StabSolution {
            objective: r.objective,
            lower_bound: r.lower_bound,
            residual: r.feasibility_residual,
            iterations: r.iterations,
            status: r.status,
            z: r.z,
        }));
        Ok(())
    })
}

/// Releases a solution. Null is ignored.
///
/// # Safety
/// `s` must come from [`l1stab_solve`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn l1stab_solution_free(s: *mut L1StabSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of entries of the minimizer (0 for a null handle).
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn l1stab_solution_len(s: *const L1StabSolution) -> usize {
    s.as_ref().map_or(0, |s| s.z.len())
}

/// Copies the minimizer into `buf`, which must hold `len` doubles and
/// `len` must equal [`l1stab_solution_len`].
///
/// # Safety
/// `s` must be a live handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn l1stab_solution_copy(
    s: *const L1StabSolution,
    buf: *mut f64,
    len: usize,
) -> L1StabStatus {
    guard(|| {
        let s = s.as_ref().ok_or(Failure::Null("solution"))?;
        if len != s.z.len() {
            return Err(Error::Dimension(format!(
                "buffer holds {len}, solution has {}",
                s.z.len()
            ))
            .into());
        }
        if len > 0 {
            if buf.is_null() {
                return Err(Failure::Null("buf"));
            }
            std::slice::from_raw_parts_mut(buf, len).copy_from_slice(&s.z);
        }
        Ok(())
    })
}

/// Scalar diagnostics of a solution; any out pointer may be null.
///
/// # Safety
/// `s` must be a live handle; non-null out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn l1stab_solution_info(
    s: *const L1StabSolution,
    objective: *mut f64,
    lower_bound: *mut f64,
    residual: *mut f64,
    iterations: *mut usize,
    status: *mut L1StabSolveStatus,
) -> L1StabStatus {
    guard(|| {
        let s = s.as_ref().ok_or(Failure::Null("solution"))?;
        if let Some(o) = objective.as_mut() {
            *o = s.objective;
        }
        if let Some(o) = lower_bound.as_mut() {
            *o = s.lower_bound;
        }
        if let Some(o) = residual.as_mut() {
            *o = s.residual;
        }
        if let Some(o) = iterations.as_mut() {
            *o = s.iterations;
        }
        if let Some(o) = status.as_mut() {
            *o = match s.status {
                SolveStatus::Converged => L1StabSolveStatus::Converged,
                SolveStatus::MaxIters => L1StabSolveStatus::MaxIters,
                SolveStatus::Infeasible => L1StabSolveStatus::Infeasible,
            };
        }
        Ok(())
    })
}

/// Two-step reweighted recovery on the matrix and measurements of
/// `problem` (its weights are ignored). Writes `n` doubles to `x_out`.
///
/// # Safety
/// `problem` must be a live handle and `x_out` writable for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn l1stab_reweighted_recover(
    problem: *const L1StabProblem,
    k: usize,
    omega: f64,
    x_out: *mut f64,
) -> L1StabStatus {
    guard(|| {
        let p = problem.as_ref().ok_or(Failure::Null("problem"))?;
        if x_out.is_null() {
            return Err(Failure::Null("x_out"));
        }
        let o = reweighted_recover(p.0.a(), p.0.y(), k, omega)?;
        std::slice::from_raw_parts_mut(x_out, o.x_star.len()).copy_from_slice(&o.x_star);
        Ok(())
    })
}

/// `C = 1 / sqrt(1 - varpi)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn l1stab_scaling_constant(varpi: f64, out: *mut f64) -> L1StabStatus {
    guard(|| {
        *out_ptr(out, "out")? = scaling_constant(varpi)?;
        Ok(())
    })
}

/// Tail-error factor `2C / (C - 1)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn l1stab_stability_factor(c: f64, out: *mut f64) -> L1StabStatus {
    guard(|| {
        *out_ptr(out, "out")? = stability_factor(c)?;
        Ok(())
    })
}

/// Internal angle `B(alpha', m')` of the regular simplex.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn l1stab_internal_angle(
    alpha_prime: f64,
    m_prime: usize,
    out: *mut f64,
) -> L1StabStatus {
    guard(|| {
        *out_ptr(out, "out")? = internal_angle(alpha_prime, m_prime)?;
        Ok(())
    })
}

/// Runs the experiment described by the JSON config and returns the
/// rendered table as a NUL-terminated string owned by the caller, to be
/// released with [`l1stab_string_free`].
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn l1stab_run_experiment(
    config_json: *const c_char,
    format: L1StabFormat,
    out: *mut *mut c_char,
) -> L1StabStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        if config_json.is_null() {
            return Err(Failure::Null("config_json"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|e| Error::Config(format!("config is not UTF-8: {e}")))?;
        let cfg = ExperimentConfig::from_json_str(text)?;
        let res = run_experiment(&cfg)?;
        let fmt = match format {
            L1StabFormat::Csv => OutputFormat::Csv,
            L1StabFormat::Json => OutputFormat::Json,
        };
        let rendered = render(&res.table, &res.meta, fmt)?;
        let c = CString::new(rendered).map_err(|e| Error::Numerical(e.to_string()))?;
        *out = c.into_raw();
        Ok(())
    })
}

/// Releases a string from [`l1stab_run_experiment`]. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn l1stab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
