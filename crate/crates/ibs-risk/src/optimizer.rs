//! Minimization of the limiting risk over the mean-sample-budget parameter Ω.
//!
//! The limiting risk η̄(Ω) is differentiable in Ω with
//! dη̄/dΩ = r·(η̄|_r − η̄|_{r+1})/Ω, so a minimizer is located by bracketing a
//! sign change of the derivative — geometric expansion by factors of two from
//! the natural scale Ω = r — and then bisecting on the derivative sign. A
//! coarse logarithmic scan across the explored range guards against multiple
//! stationary points: the minimizer need not be unique, and when several
//! candidates appear the one with the smallest risk is returned together with
//! a warning flag.
//!
//! Bisection on the derivative is preferred over golden-section on η̄ itself:
//! the derivative comes at the cost of two risk integrals and does not stall
//! on the flat bottom of the risk curve near the minimum.

use crate::asymptotic::{asymptotic_risk, asymptotic_risk_derivative};
use crate::error::{Error, Result};
use crate::loss::Loss;

/// Convergence and search-control parameters for [`find_optimum`].
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Target on the derivative magnitude at the reported minimizer,
    /// relative to the risk value there: converged when
    /// |dη̄/dΩ| ≤ `derivative_tol` · η̄(Ω*). Recorded, not enforced — the
    /// bisection itself terminates on the interval criterion below.
    pub derivative_tol: f64,
    /// Relative width at which the bisection bracket is considered
    /// converged: stop when `hi − lo ≤ interval_tol · Ω`.
    pub interval_tol: f64,
    /// Maximum number of factor-2 expansion steps away from the seed Ω = r
    /// when searching for a derivative sign change.
    pub max_expansions: u32,
    /// Number of log-spaced points in the multiplicity scan across the
    /// explored bracket.
    pub scan_points: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            derivative_tol: 1e-9,
            interval_tol: 1e-9,
            max_expansions: 60,
            scan_points: 32,
        }
    }
}

/// Outcome of [`find_optimum`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct OptimumResult {
    /// Minimizing mean-sample-budget parameter Ω*.
    pub omega_star: f64,
    /// Risk value η̄(Ω*).
    pub eta_star: f64,
    /// Final bisection bracket; `bracket.0 < omega_star < bracket.1`.
    pub bracket: (f64, f64),
    /// Number of derivative evaluations spent (expansion, bisection and
    /// multiplicity scan combined).
    pub iterations: u32,
    /// Value of dη̄/dΩ at `omega_star`; near zero when converged.
    pub stationarity_residual: f64,
    /// Set when the scan detected more than one derivative sign change:
    /// the minimizer may not be unique, and the reported one is the best
    /// of the detected candidates, not a certified global minimum.
    pub multiplicity_warning: bool,
    /// Hypotheses the search relies on but does not verify numerically
    /// (e.g. higher-order non-flatness of the loss beyond its right
    /// monotonicity edge). Purely informational.
    pub unchecked_hypotheses: Vec<String>,
}

/// Difference `η̄|_r(Ω) − η̄|_{r+1}(Ω)`, which vanishes exactly at a
/// stationary point of the risk (it equals Ω·(dη̄/dΩ)/r).
///
/// # Examples
///
/// ```
/// use ibs_risk::{stationarity_check, Loss};
/// // Squared error, r = 5: the minimizer is Ω = 3.
/// let at_optimum = stationarity_check(&Loss::mse(), 5, 3.0).unwrap();
/// assert!(at_optimum.abs() < 1e-10);
/// ```
pub fn stationarity_check(loss: &Loss, r: u32, omega: f64) -> Result<f64> {
    let at_r = asymptotic_risk(loss, r, omega)?.value;
    let at_r1 = asymptotic_risk(loss, r + 1, omega)?.value;
    Ok(at_r - at_r1)
}

/// One refined stationary-point candidate.
struct Candidate {
    omega: f64,
    bracket: (f64, f64),
}

/// Derivative sample together with its rounding-noise floor.
///
/// The derivative is a scaled difference of two risk values that approach
/// each other away from the stationary point — and approach a common
/// constant as Ω → 0 — so below the floor the computed sign is rounding
/// noise, not signal. The floor combines the integrator error bounds with
/// the cancellation error of the difference itself.
struct DerivSample {
    value: f64,
    floor: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Sign {
    Negative,
    Positive,
    /// |value| is at or below the noise floor: stationary to within
    /// numerical resolution (or unresolvable).
    Unresolved,
}

impl DerivSample {
    fn sign(&self) -> Sign {
        if self.value < -self.floor {
            Sign::Negative
        } else if self.value > self.floor {
            Sign::Positive
        } else {
            Sign::Unresolved
        }
    }
}

fn sample_derivative(loss: &Loss, r: u32, omega: f64, evals: &mut u32) -> Result<DerivSample> {
    let rf = r as f64;
    let at_r = asymptotic_risk(loss, r, omega)?;
    let at_r1 = asymptotic_risk(loss, r + 1, omega)?;
    *evals += 1;
    let value = rf * (at_r.value - at_r1.value) / omega;
    let floor = 4.0
        * rf
        * (at_r.abs_error_estimate
            + at_r1.abs_error_estimate
            + f64::EPSILON * (at_r.value.abs() + at_r1.value.abs()))
        / omega;
    Ok(DerivSample { value, floor })
}

/// Bisect a bracket `lo < hi` whose resolved derivative signs are negative
/// at `lo` and positive at `hi`, down to relative width `interval_tol`;
/// returns the midpoint and final bracket. An unresolved midpoint sign
/// means the derivative has dropped into the noise floor — stationary to
/// working precision — and the bracket collapses there.
fn bisect_minimum(
    loss: &Loss,
    r: u32,
    mut lo: f64,
    mut hi: f64,
    interval_tol: f64,
    evals: &mut u32,
) -> Result<Candidate> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= interval_tol * mid || mid <= lo || mid >= hi {
            break;
        }
        match sample_derivative(loss, r, mid, evals)?.sign() {
            Sign::Unresolved => {
                lo = mid * (1.0 - interval_tol);
                hi = mid * (1.0 + interval_tol);
                break;
            }
            Sign::Negative => lo = mid,
            Sign::Positive => hi = mid,
        }
    }
    Ok(Candidate {
        omega: 0.5 * (lo + hi),
        bracket: (lo, hi),
    })
}

/// Find the Ω minimizing the limiting risk `η̄(Ω)` for the given loss and
/// success count `r`.
///
/// The search seeds at Ω = r, expands geometrically (factor 2, up to
/// `config.max_expansions` steps) until the risk derivative changes sign,
/// bisects the bracket to relative width `config.interval_tol`, and then
/// scans `config.scan_points` log-spaced points across the explored range
/// for additional sign changes. If several minimizing candidates emerge the
/// one with the smallest risk is returned and `multiplicity_warning` is set.
///
/// Returns [`Error::NoOptimum`] when the derivative never changes sign in
/// the expansion range — the risk is monotone there and no finite minimizer
/// exists (for interval-type losses this is exactly the regime where the
/// weight ratio A₁/A₂ reaches (μ₁μ₂)^r).
pub fn find_optimum(loss: &Loss, r: u32, config: &OptimizerConfig) -> Result<OptimumResult> {
    if r == 0 {
        return Err(Error::domain("success count r must be ≥ 1"));
    }
    if !(config.interval_tol > 0.0) || !(config.derivative_tol > 0.0) {
        return Err(Error::domain(
            "optimizer tolerances must be positive and finite",
        ));
    }
    if loss.k_inf() >= r as f64 {
        return Err(Error::divergence(format!(
            "loss '{}' grows like x^{} at infinity; the risk integral needs \
             that exponent below r = {r}",
            loss.name(),
            loss.k_inf(),
        )));
    }

    let mut unchecked = vec![
        "higher-order non-flatness of the loss beyond its right monotonicity \
         edge is assumed, not verified; a perfectly flat risk valley could \
         hide further minimizers"
            .to_string(),
    ];
    // Advisory left-tail optimality check; failure does not block the search
    // but is surfaced both here and in a NoOptimum message.
    let advisory = loss.check_assumption4_left(r, None);
    let advisory_note = match &advisory {
        Ok(v) if !v.holds => {
            let note = format!(
                "left-tail optimality condition was not confirmed ({})",
                v.detail
            );
            unchecked.push(note.clone());
            Some(note)
        }
        Err(e) => {
            let note = format!("left-tail optimality check could not run ({e})");
            unchecked.push(note.clone());
            Some(note)
        }
        Ok(_) => None,
    };

    let seed = r as f64;
    let mut evals = 0u32;
    let d_seed = sample_derivative(loss, r, seed, &mut evals)?;
    if !d_seed.value.is_finite() {
        return Err(Error::domain(format!(
            "risk derivative is not finite at the seed Ω = {seed}"
        )));
    }

    // Geometric expansion from the seed toward the side the derivative
    // points away from, keeping the tightest sign-change bracket. Only a
    // sign resolved beyond the noise floor counts: far from the risk's own
    // scale the two integrals in the derivative agree to machine precision
    // and their difference carries no usable sign.
    let mut bracket = None; // (lo, hi) with resolved signs −/+ at the ends
    let mut explored = (seed, seed);
    match d_seed.sign() {
        Sign::Unresolved => {
            // Stationary (to numerical resolution) already at the seed.
            bracket = Some((
                seed * (1.0 - config.interval_tol),
                seed * (1.0 + config.interval_tol),
            ));
        }
        Sign::Positive => {
            // Risk increasing at the seed: the minimizer, if any, lies left.
            let mut hi = seed;
            let mut probe = seed;
            for _ in 0..config.max_expansions {
                probe *= 0.5;
                let d = sample_derivative(loss, r, probe, &mut evals)?;
                explored.0 = probe;
                if d.sign() == Sign::Negative {
                    bracket = Some((probe, hi));
                    break;
                }
                hi = probe;
            }
        }
        Sign::Negative => {
            // Risk decreasing at the seed: the minimizer, if any, lies right.
            let mut lo = seed;
            let mut probe = seed;
            for _ in 0..config.max_expansions {
                probe *= 2.0;
                let d = sample_derivative(loss, r, probe, &mut evals)?;
                explored.1 = probe;
                if d.sign() == Sign::Positive {
                    bracket = Some((lo, probe));
                    break;
                }
                lo = probe;
            }
        }
    }

    let (lo0, hi0) = match bracket {
        Some(b) => b,
        None => {
            let hint = match &advisory_note {
                Some(n) => format!("; {n}"),
                None => String::new(),
            };
            return Err(Error::NoOptimum(format!(
                "risk derivative for loss '{}' (r = {r}) keeps a {} sign over \
                 Ω ∈ [{:.3e}, {:.3e}] ({} geometric steps from Ω = {r}): the \
                 limiting risk is monotone on the probed range and has no \
                 finite minimizer there{hint}",
                loss.name(),
                if d_seed.sign() == Sign::Positive {
                    "positive"
                } else {
                    "negative"
                },
                explored.0,
                explored.1,
                config.max_expansions,
            )));
        }
    };

    let primary = bisect_minimum(loss, r, lo0, hi0, config.interval_tol, &mut evals)?;

    // Multiplicity scan: look for further derivative sign changes over the
    // whole explored range (seed plus every expansion probe), which always
    // contains the primary bracket. Unresolved points are skipped; a change
    // is a pair of consecutive *resolved* points with opposite signs.
    let (scan_lo, scan_hi) = explored;
    let mut sign_changes = 0usize;
    let mut candidates = vec![primary];
    if scan_hi > scan_lo {
        let n = config.scan_points.max(2);
        let (lg_lo, lg_hi) = (scan_lo.ln(), scan_hi.ln());
        let mut resolved: Vec<(f64, Sign)> = Vec::with_capacity(n);
        for i in 0..n {
            let t = i as f64 / (n - 1) as f64;
            let omega = (lg_lo + t * (lg_hi - lg_lo)).exp();
            let sign = sample_derivative(loss, r, omega, &mut evals)?.sign();
            if sign != Sign::Unresolved {
                resolved.push((omega, sign));
            }
        }
        for w in resolved.windows(2) {
            let (om_a, s_a) = w[0];
            let (om_b, s_b) = w[1];
            if s_a != s_b {
                sign_changes += 1;
                if s_a == Sign::Negative {
                    // Minimum-type crossing: refine it to a candidate.
                    candidates.push(bisect_minimum(
                        loss,
                        r,
                        om_a,
                        om_b,
                        config.interval_tol,
                        &mut evals,
                    )?);
                }
                // Maximum-type crossings only contribute to the multiplicity
                // signal: the risk cannot attain its minimum there.
            }
        }
    }

    // Deduplicate candidates that refined to the same point, then take the
    // one with the smallest risk.
    candidates.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    candidates.dedup_by(|b, a| (b.omega - a.omega).abs() <= 100.0 * config.interval_tol * a.omega);
    let mut best: Option<(f64, &Candidate)> = None;
    for cand in &candidates {
        let eta = asymptotic_risk(loss, r, cand.omega)?.value;
        if best.as_ref().is_none_or(|(e, _)| eta < *e) {
            best = Some((eta, cand));
        }
    }
    let (eta_star, winner) = best.expect("candidate list is never empty");
    let multiplicity_warning = sign_changes > 1 || candidates.len() > 1;

    let residual = asymptotic_risk_derivative(loss, r, winner.omega)?;
    evals += 1;

    Ok(OptimumResult {
        omega_star: winner.omega,
        eta_star,
        bracket: winner.bracket,
        iterations: evals,
        stationarity_residual: residual,
        multiplicity_warning,
        unchecked_hypotheses: unchecked,
    })
}
