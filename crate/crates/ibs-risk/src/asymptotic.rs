//! Asymptotic (small-p limit) estimation risk
//!
//! ```text
//! η̄(Ω) = ∫₀^∞ φ(ν) L(Ω/ν) dν = ∫₀^∞ ψ(x,Ω) L(x) dx
//! ```
//!
//! for a loss `L` of the normalized estimate and the order-`r` sampling
//! kernels φ/ψ. Three evaluation routes are provided:
//!
//! * **analytic** — for piecewise-power losses, each term `a·x^b` on a
//!   segment `[x_lo, x_hi)` contributes
//!   `a·Ω^b·(Γ(r−b, Ω/x_hi) − Γ(r−b, Ω/x_lo)) / (r−1)!`, with
//!   `Γ(r−b, Ω/∞) = Γ(r−b)` (finite only for `b < r`; otherwise the risk
//!   integral diverges) and `Γ(r−b, Ω/0⁺) = 0`;
//! * **adaptive in x** — Gauss–Kronrod on a core x-interval around the ψ
//!   peak, with both tails folded into ν = Ω/x and truncated where the
//!   envelope-certified mass drops below 1e−14;
//! * **adaptive in ν** — the same integral done entirely in ν, kept as an
//!   independent route for the change-of-variable consistency checks.
//!
//! The derivative in Ω uses the order-shift identity
//! `dη̄/dΩ = r·(η̄|_r − η̄|_{r+1})/Ω`, so optimization needs only risk values.
//!
//! Closed forms for the worked losses (squared error, absolute error,
//! generalized interval) are exported as oracles for the integrators.
//!
//! Results for piecewise losses are cached per `(loss, r, Ω)` with Ω rounded
//! to 12 significant digits; within one process, identical inputs therefore
//! return bitwise-identical values no matter the call order.

use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::quad::{self, QuadratureReport};
use crate::special::{factorial, lower_inc_gamma, upper_inc_gamma, Kernel};
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Fraction of kernel mass allowed outside the truncated integration range
/// (split between the two tails).
const TAIL_MASS: f64 = 1e-14;
/// Per-piece quadrature tolerances; three pieces keep the total near the
/// 1e−10·max(1, value) target.
const PIECE_ABS_TOL: f64 = 3.3e-11;
const PIECE_REL_TOL: f64 = 3.3e-11;
const PIECE_MAX_SUBDIV: usize = 1500;

/// Cache key: loss fingerprint, order r, and Ω at fixed decimal precision.
type CacheKey = (u64, u32, String);

fn cache() -> &'static Mutex<HashMap<CacheKey, QuadratureReport>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, QuadratureReport>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cache_key(fingerprint: u64, r: u32, omega: f64) -> CacheKey {
    // 12 significant digits: Ω values closer than that share one entry.
    (fingerprint, r, format!("{omega:.11e}"))
}

fn validate(r: u32, omega: f64) -> Result<()> {
    if r == 0 {
        return Err(Error::domain("order r must be ≥ 1"));
    }
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::domain(format!(
            "normalization Ω must be positive and finite, got {omega}"
        )));
    }
    Ok(())
}

/// Growth guard shared by every route: the integral diverges unless the
/// loss's envelope at ∞ stays below the kernel order.
fn require_convergent(loss: &Loss, r: u32) -> Result<()> {
    if loss.k_inf() >= r as f64 {
        return Err(Error::divergence(format!(
            "risk integral diverges: loss grows like x^{} at ∞ but the kernel \
             order is r = {r} (need K′ < r)",
            loss.k_inf()
        )));
    }
    Ok(())
}

// ----------------------------------------------------------------------
// Analytic route
// ----------------------------------------------------------------------

/// `Γ(r−b, Ω/x_hi) − Γ(r−b, Ω/x_lo)` with the segment-edge conventions.
///
/// The same difference equals `γ(s, Ω/x_lo) − γ(s, Ω/x_hi)` (the complete
/// gamma cancels); whichever pair has the smaller magnitude loses fewer
/// digits to cancellation, which matters for segments carrying little kernel
/// mass (e.g. a far-right segment at small Ω, where both upper gammas are
/// within ulps of Γ(s)).
fn gamma_difference(s: f64, omega: f64, x_lo: f64, x_hi: f64) -> Result<f64> {
    let upper_at_hi = if x_hi.is_infinite() {
        // Γ(s, 0⁺) = Γ(s), finite only for s > 0 — checked by the caller.
        crate::special::complete_gamma(s)?
    } else {
        upper_inc_gamma(s, omega / x_hi)?
    };
    let upper_at_lo = if x_lo == 0.0 {
        0.0 // Γ(s, ∞) = 0
    } else {
        upper_inc_gamma(s, omega / x_lo)?
    };
    if s > 0.0 && x_lo > 0.0 {
        let lower_at_lo = lower_inc_gamma(s, omega / x_lo)?;
        let lower_at_hi = if x_hi.is_infinite() {
            0.0 // γ(s, 0⁺) = 0
        } else {
            lower_inc_gamma(s, omega / x_hi)?
        };
        if lower_at_lo.abs().max(lower_at_hi.abs()) < upper_at_hi.abs().max(upper_at_lo.abs()) {
            return Ok(lower_at_lo - lower_at_hi);
        }
    }
    Ok(upper_at_hi - upper_at_lo)
}

fn analytic_risk(loss: &Loss, r: u32, omega: f64) -> Result<QuadratureReport> {
    let segments = loss
        .segments()
        .expect("analytic route requires a piecewise loss");
    let rf = r as f64;
    let fact = factorial(r - 1);
    if fact.is_infinite() {
        return Err(Error::overflow(format!(
            "(r−1)! overflows f64 at r = {r}; the analytic route supports r ≤ 171"
        )));
    }
    let mut total = 0.0f64;
    let mut magnitude = 0.0f64;
    for seg in segments {
        for term in &seg.terms {
            if term.coef == 0.0 {
                continue;
            }
            if term.power >= rf && seg.hi.is_infinite() {
                return Err(Error::divergence(format!(
                    "term {}·x^{} on the unbounded segment makes the risk \
                     integral diverge for r = {r} (need power < r)",
                    term.coef, term.power
                )));
            }
            let contrib = term.coef
                * omega.powf(term.power)
                * gamma_difference(rf - term.power, omega, seg.lo, seg.hi)?
                / fact;
            total += contrib;
            magnitude += contrib.abs();
        }
    }
    Ok(QuadratureReport {
        value: total,
        // Rounding-level bound: each gamma evaluation is good to ~1e−12
        // relative, and cancellation between terms is captured by summing
        // magnitudes.
        abs_error_estimate: 2e-12 * magnitude.max(f64::MIN_POSITIVE),
        subdivisions: 0,
        method: "analytic".to_string(),
    })
}

// ----------------------------------------------------------------------
// Certified truncation bounds
// ----------------------------------------------------------------------

/// Upper ν cutoff: beyond it the kernel×envelope mass, relative to the whole,
/// is below `TAIL_MASS`. Uses the x→0 envelope `L = O(x^K)` weakened to
/// `min(K, 0)` so the exponent `r − K_eff ≥ r` is always valid.
fn upper_nu_cutoff(r: u32, k_zero: f64) -> f64 {
    let s = r as f64 - k_zero.min(0.0);
    let gamma_s = crate::special::complete_gamma(s).unwrap_or(f64::MAX);
    let mut cut = s.max(2.0) + 20.0;
    while upper_inc_gamma(s, cut).map(|g| g / gamma_s).unwrap_or(0.0) >= TAIL_MASS {
        cut += 10.0;
        if cut > 1e4 {
            break;
        }
    }
    cut
}

/// Lower ν cutoff from the x→∞ envelope: below it,
/// `γ(r−K′, ν)/Γ(r−K′) < TAIL_MASS`. Requires `K′ < r`.
fn lower_nu_cutoff(r: u32, k_inf: f64) -> f64 {
    let s = r as f64 - k_inf;
    debug_assert!(s > 0.0);
    // Seed from γ(s,ν) ≈ ν^s/s for small ν, then tighten.
    let ln_gamma_s1 = crate::special::ln_gamma(s + 1.0);
    let mut nu = ((TAIL_MASS.ln() + ln_gamma_s1) / s).exp();
    let gamma_s = crate::special::complete_gamma(s).unwrap_or(f64::MAX);
    for _ in 0..60 {
        let frac = lower_inc_gamma(s, nu).map(|g| g / gamma_s).unwrap_or(1.0);
        if frac < TAIL_MASS {
            break;
        }
        nu *= 0.5;
    }
    nu
}

// ----------------------------------------------------------------------
// Adaptive routes
// ----------------------------------------------------------------------

struct PieceSum {
    value: f64,
    abs_error: f64,
    subdivisions: usize,
}

impl PieceSum {
    fn new() -> Self {
        PieceSum {
            value: 0.0,
            abs_error: 0.0,
            subdivisions: 0,
        }
    }
    fn add(&mut self, rep: QuadratureReport) {
        self.value += rep.value;
        self.abs_error += rep.abs_error_estimate;
        self.subdivisions += rep.subdivisions;
    }
}

/// Splits from mapping the interior features into ν = Ω/x.
fn nu_splits(loss: &Loss, r: u32, omega: f64) -> Vec<f64> {
    let mut splits: Vec<f64> = loss.breakpoints().iter().map(|&b| omega / b).collect();
    splits.push(r as f64 - 1.0); // φ mode
    splits.push(r as f64 + 1.0);
    splits.push(omega / loss.xi());
    splits.push(omega / loss.xi_prime());
    splits
}

/// Adaptive evaluation in x: Gauss–Kronrod on a core interval bracketing the
/// ψ peak, tails folded into ν-space with certified truncation.
fn adaptive_risk_x(loss: &Loss, r: u32, omega: f64) -> Result<QuadratureReport> {
    let kernel = Kernel::new(r)?;
    let rf = r as f64;
    let nu_cut = upper_nu_cutoff(r, loss.k_zero());
    let nu_min = lower_nu_cutoff(r, loss.k_inf());

    // Core in x covers ν ∈ [ν_core_lo, ν_core_hi]; tails are done in ν.
    let nu_core_hi = (4.0 * rf).max(40.0).min(nu_cut);
    let nu_core_lo = 0.5f64.max(nu_min);

    let mut sum = PieceSum::new();

    // x-core: [Ω/ν_core_hi, Ω/ν_core_lo], split at loss breakpoints, the ψ
    // mode Ω/(r+1), the φ-mode image Ω/(r−1), and the monotonicity edges.
    let x_lo = omega / nu_core_hi;
    let x_hi = omega / nu_core_lo;
    if x_lo < x_hi {
        let mut splits: Vec<f64> = loss.breakpoints().to_vec();
        splits.push(omega / (rf + 1.0));
        if r > 1 {
            splits.push(omega / (rf - 1.0));
        }
        splits.push(loss.xi());
        splits.push(loss.xi_prime());
        sum.add(quad::integrate(
            |x| kernel.psi(x, omega).expect("x in valid range") * loss.eval_raw(x),
            x_lo,
            x_hi,
            PIECE_ABS_TOL,
            PIECE_REL_TOL,
            PIECE_MAX_SUBDIV,
            &splits,
        )?);
    }

    // Upper ν tail (x near 0): ν ∈ [ν_core_hi, ν_cut].
    if nu_core_hi < nu_cut {
        sum.add(quad::integrate(
            |nu| kernel.phi(nu).expect("nu in valid range") * loss.eval_raw(omega / nu),
            nu_core_hi,
            nu_cut,
            PIECE_ABS_TOL,
            PIECE_REL_TOL,
            PIECE_MAX_SUBDIV,
            &nu_splits(loss, r, omega),
        )?);
    }

    // Lower ν tail (x large): ν ∈ [ν_min, ν_core_lo].
    if nu_min < nu_core_lo {
        sum.add(quad::integrate(
            |nu| kernel.phi(nu).expect("nu in valid range") * loss.eval_raw(omega / nu),
            nu_min,
            nu_core_lo,
            PIECE_ABS_TOL,
            PIECE_REL_TOL,
            PIECE_MAX_SUBDIV,
            &nu_splits(loss, r, omega),
        )?);
    }

    Ok(QuadratureReport {
        value: sum.value,
        // Truncated tails carry ≤ TAIL_MASS of the kernel×envelope weight.
        abs_error_estimate: sum.abs_error + TAIL_MASS * (1.0 + sum.value.abs()),
        subdivisions: sum.subdivisions,
        method: "adaptive".to_string(),
    })
}

/// Adaptive evaluation done entirely in ν (the φ form). Kept separate from
/// the x route so the change-of-variable identity is a real cross-check.
pub fn asymptotic_risk_nu_form(loss: &Loss, r: u32, omega: f64) -> Result<QuadratureReport> {
    validate(r, omega)?;
    require_convergent(loss, r)?;
    let kernel = Kernel::new(r)?;
    let nu_cut = upper_nu_cutoff(r, loss.k_zero());
    let nu_min = lower_nu_cutoff(r, loss.k_inf());
    let rep = quad::integrate(
        |nu| kernel.phi(nu).expect("nu in valid range") * loss.eval_raw(omega / nu),
        nu_min,
        nu_cut,
        PIECE_ABS_TOL,
        PIECE_REL_TOL,
        3 * PIECE_MAX_SUBDIV,
        &nu_splits(loss, r, omega),
    )?;
    Ok(QuadratureReport {
        value: rep.value,
        abs_error_estimate: rep.abs_error_estimate + TAIL_MASS * (1.0 + rep.value.abs()),
        subdivisions: rep.subdivisions,
        method: "adaptive-nu".to_string(),
    })
}

/// Force the adaptive x-route regardless of representation (the analytic
/// route's cross-check partner).
pub fn asymptotic_risk_adaptive(loss: &Loss, r: u32, omega: f64) -> Result<QuadratureReport> {
    validate(r, omega)?;
    require_convergent(loss, r)?;
    adaptive_risk_x(loss, r, omega)
}

/// Asymptotic risk `η̄(Ω)`: analytic assembly for piecewise-power losses,
/// adaptive quadrature for callbacks.
///
/// # Examples
///
/// ```
/// use ibs_risk::{asymptotic_risk, Loss};
/// // Squared error at r=5, Ω=3 has risk 9/12 − 6/4 + 1 = 1/4.
/// let rep = asymptotic_risk(&Loss::mse(), 5, 3.0).unwrap();
/// assert!((rep.value - 0.25).abs() < 1e-12);
/// assert_eq!(rep.method, "analytic");
/// ```
pub fn asymptotic_risk(loss: &Loss, r: u32, omega: f64) -> Result<QuadratureReport> {
    validate(r, omega)?;
    require_convergent(loss, r)?;
    let key = loss.fingerprint().map(|fp| cache_key(fp, r, omega));
    if let Some(k) = &key {
        if let Some(hit) = cache().lock().expect("risk cache poisoned").get(k) {
            return Ok(hit.clone());
        }
    }
    let rep = if loss.is_piecewise() {
        analytic_risk(loss, r, omega)?
    } else {
        adaptive_risk_x(loss, r, omega)?
    };
    if let Some(k) = key {
        cache()
            .lock()
            .expect("risk cache poisoned")
            .insert(k, rep.clone());
    }
    Ok(rep)
}

/// `dη̄/dΩ` via the order-shift identity `r·(η̄|_r − η̄|_{r+1})/Ω`.
///
/// Requires `K′ < r` so both orders converge.
pub fn asymptotic_risk_derivative(loss: &Loss, r: u32, omega: f64) -> Result<f64> {
    validate(r, omega)?;
    require_convergent(loss, r)?;
    let at_r = asymptotic_risk(loss, r, omega)?.value;
    let at_r1 = asymptotic_risk(loss, r + 1, omega)?.value;
    Ok(r as f64 * (at_r - at_r1) / omega)
}

// ----------------------------------------------------------------------
// Closed forms (oracles for the integrators)
// ----------------------------------------------------------------------

/// Squared error: `η̄ = Ω²/((r−1)(r−2)) − 2Ω/(r−1) + 1`, for `r ≥ 3`.
pub fn closed_form_mse(r: u32, omega: f64) -> Result<f64> {
    validate(r, omega)?;
    if r < 3 {
        return Err(Error::domain(format!(
            "squared-error risk diverges for r = {r}: the x² envelope needs r > 2"
        )));
    }
    let rf = r as f64;
    Ok(omega * omega / ((rf - 1.0) * (rf - 2.0)) - 2.0 * omega / (rf - 1.0) + 1.0)
}

/// Absolute error: `η̄ = 2(Γ(r,Ω) − Ω·Γ(r−1,Ω))/(r−1)! + Ω/(r−1) − 1`, `r ≥ 2`.
pub fn closed_form_mae(r: u32, omega: f64) -> Result<f64> {
    validate(r, omega)?;
    if r < 2 {
        return Err(Error::domain(format!(
            "absolute-error risk diverges for r = {r}: the |x| envelope needs r > 1"
        )));
    }
    let rf = r as f64;
    let g_r = upper_inc_gamma(rf, omega)?;
    let g_r1 = upper_inc_gamma(rf - 1.0, omega)?;
    Ok(2.0 * (g_r - omega * g_r1) / factorial(r - 1) + omega / (rf - 1.0) - 1.0)
}

/// Generalized interval loss:
/// `η̄ = A₁·γ(r, Ω/μ₁)/(r−1)! + A₂·Γ(r, Ω·μ₂)/(r−1)!`.
pub fn closed_form_generalized_interval(
    a1: f64,
    a2: f64,
    mu1: f64,
    mu2: f64,
    r: u32,
    omega: f64,
) -> Result<f64> {
    validate(r, omega)?;
    if !(mu1 > 1.0) || !(mu2 > 1.0) || !(a1 >= 0.0) || !(a2 >= 0.0) {
        return Err(Error::domain(
            "generalized interval closed form requires μ₁, μ₂ > 1 and A₁, A₂ ≥ 0",
        ));
    }
    let rf = r as f64;
    let fact = factorial(r - 1);
    let below = if a1 == 0.0 {
        0.0
    } else {
        a1 * lower_inc_gamma(rf, omega / mu1)?
    };
    let above = if a2 == 0.0 {
        0.0
    } else {
        a2 * upper_inc_gamma(rf, omega * mu2)?
    };
    Ok((below + above) / fact)
}

/// Derivative of the generalized-interval risk in Ω:
/// `Ω^{r−1}(A₁·μ₁^{−r}·e^{−Ω/μ₁} − A₂·μ₂^{r}·e^{−Ω·μ₂})/(r−1)!`.
pub fn closed_form_generalized_interval_derivative(
    a1: f64,
    a2: f64,
    mu1: f64,
    mu2: f64,
    r: u32,
    omega: f64,
) -> Result<f64> {
    validate(r, omega)?;
    let rf = r as f64;
    Ok(omega.powf(rf - 1.0)
        * (a1 * mu1.powf(-rf) * (-omega / mu1).exp() - a2 * mu2.powf(rf) * (-omega * mu2).exp())
        / factorial(r - 1))
}
