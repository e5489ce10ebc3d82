//! C ABI for the risk library.
//!
//! Conventions:
//! - every fallible call returns an [`IbsStatus`]; `IBS_STATUS_OK` is 0;
//! - results come back through out-pointers, written only on success;
//! - [`ibs_last_error_message`] returns a thread-local, NUL-terminated
//!   description of the most recent failure on the calling thread (valid
//!   until the next failing call on that thread);
//! - `IbsLoss` is an opaque handle created by the `ibs_loss_*`
//!   constructors and released with [`ibs_loss_free`];
//! - panics never unwind across the boundary — they surface as
//!   `IBS_STATUS_PANIC`.
//!
//! The companion header is `include/ibs_risk.h`. It is maintained by hand
//! in cbindgen output style (the build environment has no network access
//! to fetch cbindgen); the `header_lists_exactly_the_exported_symbols`
//! test keeps it in sync with this file.

// The safety contract is uniform across the surface (valid pointers per C
// conventions, documented above and in the header); flat argument lists
// are inherent to a C ABI.
#![allow(clippy::missing_safety_doc)]
#![allow(clippy::too_many_arguments)]

use ibs_risk::finite::{exact_risk, simulate_risk, EstimatorSpec, SimConfig};
use ibs_risk::optimizer::{find_optimum, OptimizerConfig};
use ibs_risk::{asymptotic_risk, asymptotic_risk_derivative, Error, Loss};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status code returned by every fallible API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IbsStatus {
    Ok = 0,
    Domain = 1,
    Overflow = 2,
    NonConvergence = 3,
    Divergence = 4,
    NoOptimum = 5,
    Schema = 6,
    Io = 7,
    NullArgument = 8,
    InvalidUtf8 = 9,
    Panic = 10,
}

/// Opaque loss handle.
pub struct IbsLoss(Loss);

/// Optimization result in plain-old-data form. The Rust API additionally
/// carries textual unchecked-hypothesis notes; here only their count is
/// exposed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IbsOptimum {
    pub omega_star: f64,
    pub eta_star: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub iterations: u32,
    pub unchecked_hypothesis_count: u32,
    pub stationarity_residual: f64,
    pub multiplicity_warning: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> IbsStatus {
    match err.kind() {
        "domain" => IbsStatus::Domain,
        "overflow" => IbsStatus::Overflow,
        "non_convergence" => IbsStatus::NonConvergence,
        "divergence" => IbsStatus::Divergence,
        "no_optimum" => IbsStatus::NoOptimum,
        "schema" => IbsStatus::Schema,
        "io" => IbsStatus::Io,
        _ => IbsStatus::Domain,
    }
}

/// Run a fallible body, translating library errors and panics to codes.
fn guarded(body: impl FnOnce() -> Result<(), Error>) -> IbsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => IbsStatus::Ok,
        Ok(Err(err)) => {
            set_error(&err.to_string());
            status_of(&err)
        }
        Err(_) => {
            set_error("internal panic crossed the C boundary");
            IbsStatus::Panic
        }
    }
}

fn null_argument(name: &str) -> IbsStatus {
    set_error(&format!("argument '{name}' must not be NULL"));
    IbsStatus::NullArgument
}

/// Store a freshly built loss behind `out`.
fn deliver_loss(loss: Loss, out: *mut *mut IbsLoss) {
    unsafe { *out = Box::into_raw(Box::new(IbsLoss(loss))) };
}

/// Most recent error message on this thread (empty string if none).
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn ibs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Squared-error loss `(x − 1)²`.
#[no_mangle]
pub unsafe extern "C" fn ibs_loss_new_mse(out: *mut *mut IbsLoss) -> IbsStatus {
    if out.is_null() {
        return null_argument("out");
    }
    guarded(|| {
        deliver_loss(Loss::mse(), out);
        Ok(())
    })
}

/// Absolute-error loss `|x − 1|`.
#[no_mangle]
pub unsafe extern "C" fn ibs_loss_new_mae(out: *mut *mut IbsLoss) -> IbsStatus {
    if out.is_null() {
        return null_argument("out");
    }
    guarded(|| {
        deliver_loss(Loss::mae(), out);
        Ok(())
    })
}

/// Two-coefficient interval loss: `a2` below `1/mu2`, zero on
/// `[1/mu2, mu1]`, `a1` above `mu1`. Requires `mu1, mu2 > 1`.
#[no_mangle]
pub unsafe extern "C" fn ibs_loss_new_generalized_interval(
    a1: f64,
    a2: f64,
    mu1: f64,
    mu2: f64,
    out: *mut *mut IbsLoss,
) -> IbsStatus {
    if out.is_null() {
        return null_argument("out");
    }
    guarded(|| {
        deliver_loss(Loss::generalized_interval(a1, a2, mu1, mu2)?, out);
        Ok(())
    })
}

/// Build a loss from a description string: a built-in name (`mse`, `mae`,
/// `constant-one`), an inline spec such as
/// `generalized_interval:a1=1,a2=1,mu1=2,mu2=2`, or a path to a loss
/// description JSON file — the same syntax the CLI `--loss` flag accepts.
#[no_mangle]
pub unsafe extern "C" fn ibs_loss_from_spec(
    spec: *const c_char,
    out: *mut *mut IbsLoss,
) -> IbsStatus {
    if spec.is_null() {
        return null_argument("spec");
    }
    if out.is_null() {
        return null_argument("out");
    }
    let text = match CStr::from_ptr(spec).to_str() {
        Ok(s) => s.to_owned(),
        Err(_) => {
            set_error("loss spec is not valid UTF-8");
            return IbsStatus::InvalidUtf8;
        }
    };
    guarded(|| {
        deliver_loss(ibs_risk::cli::load_loss(&text)?, out);
        Ok(())
    })
}

/// Release a loss handle. NULL is tolerated.
#[no_mangle]
pub unsafe extern "C" fn ibs_loss_free(loss: *mut IbsLoss) {
    if !loss.is_null() {
        drop(Box::from_raw(loss));
    }
}

/// Asymptotic (small-p) normalized risk of `p_hat = omega / (N + c)` and a
/// bound on the evaluation error.
#[no_mangle]
pub unsafe extern "C" fn ibs_asymptotic_risk(
    loss: *const IbsLoss,
    r: u32,
    omega: f64,
    eta_bar: *mut f64,
    abs_error: *mut f64,
) -> IbsStatus {
    if loss.is_null() {
        return null_argument("loss");
    }
    if eta_bar.is_null() {
        return null_argument("eta_bar");
    }
    if abs_error.is_null() {
        return null_argument("abs_error");
    }
    let handle = &*loss;
    guarded(|| {
        let report = asymptotic_risk(&handle.0, r, omega)?;
        *eta_bar = report.value;
        *abs_error = report.abs_error_estimate;
        Ok(())
    })
}

/// Derivative of the asymptotic risk with respect to `omega`.
#[no_mangle]
pub unsafe extern "C" fn ibs_asymptotic_risk_derivative(
    loss: *const IbsLoss,
    r: u32,
    omega: f64,
    derivative: *mut f64,
) -> IbsStatus {
    if loss.is_null() {
        return null_argument("loss");
    }
    if derivative.is_null() {
        return null_argument("derivative");
    }
    let handle = &*loss;
    guarded(|| {
        *derivative = asymptotic_risk_derivative(&handle.0, r, omega)?;
        Ok(())
    })
}

/// Minimize the asymptotic risk over `omega` with default tolerances.
#[no_mangle]
pub unsafe extern "C" fn ibs_find_optimum(
    loss: *const IbsLoss,
    r: u32,
    out: *mut IbsOptimum,
) -> IbsStatus {
    if loss.is_null() {
        return null_argument("loss");
    }
    if out.is_null() {
        return null_argument("out");
    }
    let handle = &*loss;
    guarded(|| {
        let result = find_optimum(&handle.0, r, &OptimizerConfig::default())?;
        *out = IbsOptimum {
            omega_star: result.omega_star,
            eta_star: result.eta_star,
            bracket_lo: result.bracket.0,
            bracket_hi: result.bracket.1,
            iterations: result.iterations,
            unchecked_hypothesis_count: result.unchecked_hypotheses.len() as u32,
            stationarity_residual: result.stationarity_residual,
            multiplicity_warning: result.multiplicity_warning,
        };
        Ok(())
    })
}

/// Exact finite-p risk of `p_hat = omega / (N + c)` by certified series
/// summation: `eta` gets the partial sum, `error_bound` the certified
/// truncation bound (at most `tol` on success).
#[no_mangle]
pub unsafe extern "C" fn ibs_exact_risk(
    loss: *const IbsLoss,
    r: u32,
    p: f64,
    omega: f64,
    c: i64,
    tol: f64,
    eta: *mut f64,
    error_bound: *mut f64,
) -> IbsStatus {
    if loss.is_null() {
        return null_argument("loss");
    }
    if eta.is_null() {
        return null_argument("eta");
    }
    if error_bound.is_null() {
        return null_argument("error_bound");
    }
    let handle = &*loss;
    guarded(|| {
        let estimator = EstimatorSpec::ShiftedReciprocal { omega, c };
        let (value, bound) = exact_risk(&handle.0, &estimator, r, p, tol)?;
        *eta = value;
        *error_bound = bound;
        Ok(())
    })
}

/// Monte Carlo estimate of the finite-p risk with default batching:
/// `eta` gets the sample mean, `standard_error` the standard error of the
/// mean. Fixed `seed` gives reproducible results.
#[no_mangle]
pub unsafe extern "C" fn ibs_simulate_risk(
    loss: *const IbsLoss,
    r: u32,
    p: f64,
    omega: f64,
    c: i64,
    samples: u64,
    seed: u64,
    eta: *mut f64,
    standard_error: *mut f64,
) -> IbsStatus {
    if loss.is_null() {
        return null_argument("loss");
    }
    if eta.is_null() {
        return null_argument("eta");
    }
    if standard_error.is_null() {
        return null_argument("standard_error");
    }
    let handle = &*loss;
    guarded(|| {
        let estimator = EstimatorSpec::ShiftedReciprocal { omega, c };
        let config = SimConfig {
            samples,
            seed,
            ..SimConfig::default()
        };
        let (mean, stderr) = simulate_risk(&handle.0, &estimator, r, p, &config)?;
        *eta = mean;
        *standard_error = stderr;
        Ok(())
    })
}
