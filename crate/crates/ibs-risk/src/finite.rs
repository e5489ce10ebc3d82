//! Finite-p risk of inverse-binomial-sampling estimators: certified series
//! summation, Monte Carlo simulation, sweeps over p, and verification
//! suites for the minimax and dominance guarantees.
//!
//! The estimators covered map the stopping time N (trials until the r-th
//! success) to p̂ = g(N) with g(n) = Ω/(n+c) eventually, so the normalized
//! risk is η(p) = Σ_{n≥r} f(n)·L(g(n)/p) with f the negative binomial pmf.
//! The series is summed ascending with a rigorous truncation certificate:
//! the exact tail probability of N times a supremum of the loss over the
//! remaining (small) arguments.

use crate::asymptotic::asymptotic_risk;
use crate::error::{Error, Result};
use crate::loss::Loss;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::beta::beta_reg;

/// Below this magnitude the running pmf term is folded into the log-space
/// carry so the linear recurrence keeps full precision.
const RENORM_LOW: f64 = 1e-280;
/// Terms with log-pmf below this threshold cannot influence any realistic
/// tolerance (each contributes < 1e-300·sup L) and are skipped while the
/// recurrence itself keeps running in log space.
const NEGLIGIBLE_LOG_PMF: f64 = -700.0;
/// Hard cap on summed terms; reaching it returns the partial value with
/// whatever certificate was achieved instead of running unbounded.
const MAX_TERMS: u64 = 100_000_000;

/// An estimator p̂ = g(N) of the success probability from the stopping
/// time N of inverse binomial sampling.
#[derive(Debug, Clone, serde::Serialize)]
pub enum EstimatorSpec {
    /// g(n) = Ω/(n+c) for every n ≥ r. The shift c must keep n+c ≥ 1 at
    /// n = r, i.e. c ≥ 1−r, so that g stays positive and finite.
    ShiftedReciprocal { omega: f64, c: i64 },
    /// Explicit values g(r), g(r+1), … for the first entries, then the
    /// reciprocal tail rule Ω/(n+c). The limit n·g(n) → Ω is what the
    /// asymptotic theory sees, so the tail rule carries the design budget.
    CustomTable {
        values: Vec<f64>,
        tail_omega: f64,
        tail_c: i64,
    },
}

impl EstimatorSpec {
    /// Unbiased reciprocal estimator p̂ = (r−1)/(N−1).
    pub fn unbiased(r: u32) -> Self {
        EstimatorSpec::ShiftedReciprocal {
            omega: r as f64 - 1.0,
            c: -1,
        }
    }

    /// Minimax-MSE estimator p̂ = (r−2)/(N−1).
    pub fn minimax_mse(r: u32) -> Self {
        EstimatorSpec::ShiftedReciprocal {
            omega: r as f64 - 2.0,
            c: -1,
        }
    }

    /// Budget-tuned estimator p̂ = Ω/(N+1).
    pub fn with_budget(omega: f64) -> Self {
        EstimatorSpec::ShiftedReciprocal { omega, c: 1 }
    }

    /// Design budget Ω = lim n·g(n) of the estimator.
    pub fn omega(&self) -> f64 {
        match self {
            EstimatorSpec::ShiftedReciprocal { omega, .. } => *omega,
            EstimatorSpec::CustomTable { tail_omega, .. } => *tail_omega,
        }
    }

    /// Shift c of the (eventual) reciprocal rule.
    fn tail_shift(&self) -> i64 {
        match self {
            EstimatorSpec::ShiftedReciprocal { c, .. } => *c,
            EstimatorSpec::CustomTable { tail_c, .. } => *tail_c,
        }
    }

    /// First index n at which the reciprocal tail rule applies.
    fn tail_start(&self, r: u32) -> u64 {
        match self {
            EstimatorSpec::ShiftedReciprocal { .. } => r as u64,
            EstimatorSpec::CustomTable { values, .. } => r as u64 + values.len() as u64,
        }
    }

    /// Estimate g(n) for a stopping time n ≥ r.
    pub fn g(&self, n: u64, r: u32) -> f64 {
        match self {
            EstimatorSpec::ShiftedReciprocal { omega, c } => omega / (n as i64 + c) as f64,
            EstimatorSpec::CustomTable {
                values,
                tail_omega,
                tail_c,
            } => {
                let idx = (n - r as u64) as usize;
                match values.get(idx) {
                    Some(v) => *v,
                    None => tail_omega / (n as i64 + tail_c) as f64,
                }
            }
        }
    }

    /// Validate this estimator description against a concrete success count r.
    pub fn validate_for(&self, r: u32) -> Result<()> {
        if r == 0 {
            return Err(Error::domain("success count r must be ≥ 1"));
        }
        let (omega, c) = (self.omega(), self.tail_shift());
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::domain(format!(
                "estimator budget Ω must be positive and finite, got {omega}"
            )));
        }
        if self.tail_start(r) as i64 + c < 1 {
            return Err(Error::domain(format!(
                "shift c = {c} makes g(n) = Ω/(n+c) non-positive at n = {}; \
                 need n + c ≥ 1 from the first reciprocal index on",
                self.tail_start(r),
            )));
        }
        if let EstimatorSpec::CustomTable { values, .. } = self {
            if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                return Err(Error::domain(format!(
                    "custom estimate table contains non-positive entry {v}"
                )));
            }
        }
        Ok(())
    }

    /// Human-readable description for reports and manifests.
    pub fn describe(&self) -> String {
        match self {
            EstimatorSpec::ShiftedReciprocal { omega, c } => {
                format!("g(n) = {omega}/(n{c:+})")
            }
            EstimatorSpec::CustomTable {
                values,
                tail_omega,
                tail_c,
            } => format!(
                "{} tabulated values, then g(n) = {tail_omega}/(n{tail_c:+})",
                values.len()
            ),
        }
    }
}

/// How the `error_bound` of a [`RiskRecord`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Rigorous series-truncation certificate (tail probability × loss sup).
    ExactTruncation,
    /// Monte Carlo standard error of the mean.
    MonteCarloStderr,
}

/// One evaluated point of a risk curve. `p = 0` marks the appended
/// asymptotic reference value η̄.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RiskRecord {
    pub p: f64,
    pub eta: f64,
    pub bound_kind: BoundKind,
    pub error_bound: f64,
}

/// Risk-versus-p curve for one (loss, estimator, r) configuration.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RiskCurve {
    pub loss: String,
    pub estimator: String,
    pub r: u32,
    pub records: Vec<RiskRecord>,
    /// Grid points whose evaluation failed, with the error message; the
    /// sweep continues past them.
    pub failures: Vec<(f64, String)>,
}

/// Monte Carlo controls: total sample count, RNG seed, and batch size.
/// Batches derive independent RNG streams from (seed, batch index) and are
/// merged in index order, so results are identical at any parallelism.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SimConfig {
    pub samples: u64,
    pub seed: u64,
    pub batch: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            samples: 100_000,
            seed: 0,
            batch: 65_536,
        }
    }
}

fn validate_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "success probability must satisfy 0 < p < 1, got {p}"
        )));
    }
    Ok(())
}

/// Running negative binomial pmf f(n) kept as `value · e^carry`, with the
/// carry folded in whenever the linear part drifts out of range. All terms
/// are positive, so the recurrence f(n+1) = f(n)·(n/(n−r+1))·(1−p) is free
/// of cancellation; linear-space stepping with occasional renormalization
/// avoids a log/exp per term.
struct PmfWalker {
    r: u32,
    q: f64,
    n: u64,
    value: f64,
    carry: f64,
}

impl PmfWalker {
    fn start(r: u32, p: f64) -> Self {
        // f(r) = p^r, seeded in log space so huge r or tiny p cannot flush
        // the whole walk to zero.
        let log_start = r as f64 * p.ln();
        PmfWalker {
            r,
            q: 1.0 - p,
            n: r as u64,
            value: 1.0,
            carry: log_start,
        }
    }

    /// Current pmf f(n), or 0.0 when it is below any representable
    /// relevance (the walker still tracks it exactly in log space).
    fn pmf(&self) -> f64 {
        if self.carry < NEGLIGIBLE_LOG_PMF {
            0.0
        } else {
            self.value * self.carry.exp()
        }
    }

    fn log_pmf(&self) -> f64 {
        self.value.ln() + self.carry
    }

    /// Ratio f(n+1)/f(n) at the current n.
    fn ratio(&self) -> f64 {
        let n = self.n as f64;
        self.q * n / (n - self.r as f64 + 1.0)
    }

    fn advance(&mut self) {
        self.value *= self.ratio();
        self.n += 1;
        if self.value < RENORM_LOW || self.value > 1.0 / RENORM_LOW {
            self.carry += self.value.ln();
            self.value = 1.0;
        }
    }
}

/// Supremum of the loss over (0, a] once `a` is inside the left-monotone
/// region (x ≤ ξ): non-increase toward ξ puts the sup at the origin, and
/// the max with L(a) costs nothing while also covering callback losses
/// whose metadata is optimistic.
fn left_tail_sup(loss: &Loss, a: f64) -> f64 {
    loss.limit_at_zero().max(loss.eval_raw(a))
}

/// Exact tail probability Pr[N > n] from the regularized incomplete beta
/// function, evaluated in the complement orientation so small tails keep
/// full relative precision.
fn exact_tail_probability(r: u32, p: f64, n: u64) -> f64 {
    // Pr[N ≤ n] = I_p(r, n−r+1), hence Pr[N > n] = I_{1−p}(n−r+1, r).
    beta_reg((n - r as u64 + 1) as f64, r as f64, 1.0 - p)
}

/// Envelope data for losses unbounded at the origin: L(x) ≤ m·x^k near 0
/// with k < 0. Derived automatically for piecewise losses from their first
/// segment; callback losses must go through
/// [`exact_risk_with_envelope`].
#[derive(Debug, Clone, Copy)]
pub struct Envelope {
    /// Envelope coefficient M.
    pub m: f64,
    /// Envelope exponent K (negative for origin-divergent losses).
    pub k: f64,
    /// The envelope is only claimed on (0, valid_to].
    pub valid_to: f64,
}

fn derive_envelope(loss: &Loss) -> Option<Envelope> {
    let segments = loss.segments()?;
    let first = segments.first()?;
    let k = loss.k_zero();
    // Σ|a_j|·x₁^{b_j−k} dominates Σ a_j x^{b_j} on (0, x₁] since b_j ≥ k.
    let mut m = 0.0;
    for t in &first.terms {
        m += t.coef.abs() * first.hi.powf(t.power - k);
    }
    Some(Envelope {
        m,
        k,
        valid_to: first.hi,
    })
}

/// Exact normalized risk η(p) = Σ_{n≥r} f(n)·L(g(n)/p) with a rigorous
/// truncation certificate.
///
/// Summation ascends from n = r and stops once the certified remainder —
/// the exact tail probability of N times a supremum of L over the remaining
/// arguments — drops to `tol`. The supremum comes from the loss's
/// left-monotonicity metadata: the tail arguments g(n)/p decrease toward 0,
/// so once they are below ξ the loss is largest at the origin.
///
/// Losses with L(0+) = ∞ (envelope exponent K < 0) use the bound
/// L(x) ≤ M·x^K instead; for piecewise losses M is derived from the first
/// segment, while callback losses need [`exact_risk_with_envelope`].
///
/// Returns the value and the certificate actually achieved; the certificate
/// can exceed `tol` only when the term cap (10⁸) was reached first.
pub fn exact_risk(
    loss: &Loss,
    est: &EstimatorSpec,
    r: u32,
    p: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    if loss.k_zero() < 0.0 {
        let env = derive_envelope(loss).ok_or_else(|| Error::NonConvergence {
            what: format!(
                "series tail certificate for loss '{}': L(0+) is infinite and no \
                 envelope L(x) ≤ M·x^K is available; supply one via \
                 exact_risk_with_envelope",
                loss.name()
            ),
            value: f64::NAN,
            error_bound: f64::INFINITY,
        })?;
        return exact_risk_impl(loss, est, r, p, tol, Some(env));
    }
    exact_risk_impl(loss, est, r, p, tol, None)
}

/// [`exact_risk`] with an explicit origin envelope L(x) ≤ M·x^K valid on
/// (0, `valid_to`], for callback losses that diverge at the origin.
pub fn exact_risk_with_envelope(
    loss: &Loss,
    est: &EstimatorSpec,
    r: u32,
    p: f64,
    tol: f64,
    envelope: Envelope,
) -> Result<(f64, f64)> {
    if !(envelope.m > 0.0) || !(envelope.valid_to > 0.0) || !envelope.k.is_finite() {
        return Err(Error::domain(
            "envelope needs positive coefficient and validity range and finite exponent",
        ));
    }
    exact_risk_impl(loss, est, r, p, tol, Some(envelope))
}

fn exact_risk_impl(
    loss: &Loss,
    est: &EstimatorSpec,
    r: u32,
    p: f64,
    tol: f64,
    envelope: Option<Envelope>,
) -> Result<(f64, f64)> {
    validate_p(p)?;
    est.validate_for(r)?;
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::domain(format!(
            "truncation tolerance must be positive and finite, got {tol}"
        )));
    }

    // Index from which the certificate logic may engage: the reciprocal
    // tail rule must be active (custom table exhausted) and the next
    // argument must be inside the region the loss metadata describes.
    let tail_start = est.tail_start(r);
    let enter_region = match &envelope {
        Some(env) => loss.xi().min(env.valid_to),
        None => loss.xi(),
    };
    let c = est.tail_shift();
    let omega = est.omega();

    let mut walker = PmfWalker::start(r, p);
    let mut sum = crate::quad::Kahan::new();
    let mut best_bound = f64::INFINITY;
    loop {
        let n = walker.n;
        let f = walker.pmf();
        if f > 0.0 {
            sum.add(f * loss.eval_raw(est.g(n, r) / p));
        }

        let next_arg = est.g(n + 1, r) / p;
        if n + 1 >= tail_start && next_arg <= enter_region {
            // Cheap geometric stop heuristic first; the pmf ratio
            // q·m/(m−r+1) decreases in m, so f(m) ≤ f(n)·ρ^{m−n} and the
            // tail mass is at most f(n)·ρ/(1−ρ).
            let rho = walker.ratio();
            if rho < 1.0 {
                let cheap_tail = walker.pmf() * rho / (1.0 - rho);
                let cheap_bound = match &envelope {
                    None => cheap_tail * left_tail_sup(loss, next_arg),
                    Some(env) => envelope_tail_bound(env, &walker, omega, p, c, rho),
                };
                if cheap_bound <= tol {
                    // Certify with the exact tail probability, which the
                    // geometric bound dominates.
                    let bound = match &envelope {
                        None => exact_tail_probability(r, p, n) * left_tail_sup(loss, next_arg),
                        // The envelope certificate is already the sharpest
                        // form we bound the weighted tail by.
                        Some(env) => envelope_tail_bound(env, &walker, omega, p, c, rho),
                    };
                    return Ok((sum.total(), bound));
                }
                best_bound = best_bound.min(cheap_bound);
            }
        }

        if n - r as u64 + 1 >= MAX_TERMS {
            // Desk-scale cap: return the partial value with the best
            // certificate achieved rather than running unbounded.
            return Ok((sum.total(), best_bound));
        }
        walker.advance();
    }
}

/// Tail bound Σ_{m>n} f(m)·M·(g(m)/p)^K for K < 0 and the reciprocal rule
/// g(m) = Ω/(m+c): with h(m) = f(m)·(m+c)^{−K}, the ratio h(m+1)/h(m) is
/// decreasing in m, so the tail is geometric below h(n+1)/(1−ρ̃).
fn envelope_tail_bound(
    env: &Envelope,
    walker: &PmfWalker,
    omega: f64,
    p: f64,
    c: i64,
    rho: f64,
) -> f64 {
    let n = walker.n as f64;
    let growth = -env.k; // |K| for K < 0; zero-or-negative growth is free
    let shift = c as f64;
    let ratio_tilde = rho * ((n + 2.0 + shift) / (n + 1.0 + shift)).powf(growth.max(0.0));
    if ratio_tilde >= 1.0 {
        return f64::INFINITY;
    }
    let log_f_next = walker.log_pmf() + rho.ln();
    let log_h_next = log_f_next + growth.max(0.0) * (n + 1.0 + shift).ln();
    let scale = env.m * (omega / p).powf(env.k);
    scale * log_h_next.exp() / (1.0 - ratio_tilde)
}

/// Monte Carlo estimate of η(p): draws N as an r-fold sum of geometric
/// trial counts (inverse-CDF, one uniform per success), applies
/// L(g(N)/p), and returns the sample mean with its standard error.
///
/// Deterministic for a fixed [`SimConfig`]: each batch of `cfg.batch`
/// samples runs on its own RNG stream selected by the batch index, and
/// batch results merge in index order regardless of thread scheduling.
pub fn simulate_risk(
    loss: &Loss,
    est: &EstimatorSpec,
    r: u32,
    p: f64,
    cfg: &SimConfig,
) -> Result<(f64, f64)> {
    validate_p(p)?;
    est.validate_for(r)?;
    if cfg.samples == 0 {
        return Err(Error::domain("need at least one Monte Carlo sample"));
    }
    if cfg.batch == 0 {
        return Err(Error::domain("batch size must be ≥ 1"));
    }

    let n_batches = cfg.samples.div_ceil(cfg.batch);
    let ln_q = (1.0 - p).ln();
    let batch_stats: Vec<(f64, f64)> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b);
            let count = cfg.batch.min(cfg.samples - b * cfg.batch);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..count {
                let mut n: u64 = 0;
                for _ in 0..r {
                    // U ∈ (0, 1]; trials to one success = ⌊ln U / ln(1−p)⌋+1.
                    let u = 1.0 - rng.gen::<f64>();
                    n += (u.ln() / ln_q) as u64 + 1;
                }
                let x = loss.eval_raw(est.g(n, r) / p);
                s += x;
                s2 += x * x;
            }
            (s, s2)
        })
        .collect();

    let mut sum = crate::quad::Kahan::new();
    let mut sum_sq = crate::quad::Kahan::new();
    for (s, s2) in &batch_stats {
        sum.add(*s);
        sum_sq.add(*s2);
    }
    let n = cfg.samples as f64;
    let mean = sum.total() / n;
    let stderr = if cfg.samples > 1 {
        ((sum_sq.total() - n * mean * mean).max(0.0) / (n * (n - 1.0))).sqrt()
    } else {
        f64::INFINITY
    };
    Ok((mean, stderr))
}

/// Evaluate η(p) across a strictly monotone grid of p values and append
/// the asymptotic reference η̄ as a final record with p = 0 (or a leading
/// record for ascending grids). Per-point failures are recorded on the
/// curve and do not abort the sweep.
pub fn risk_sweep(
    loss: &Loss,
    est: &EstimatorSpec,
    r: u32,
    p_grid: &[f64],
    tol: f64,
) -> Result<RiskCurve> {
    if p_grid.is_empty() {
        return Err(Error::domain("sweep grid must contain at least one p"));
    }
    for p in p_grid {
        validate_p(*p)?;
    }
    let descending = p_grid.len() < 2 || p_grid[0] > p_grid[1];
    for w in p_grid.windows(2) {
        let ok = if descending { w[0] > w[1] } else { w[0] < w[1] };
        if !ok {
            return Err(Error::domain(
                "sweep grid must be strictly increasing or strictly decreasing",
            ));
        }
    }

    let mut curve = RiskCurve {
        loss: loss.name().to_string(),
        estimator: est.describe(),
        r,
        records: Vec::with_capacity(p_grid.len() + 1),
        failures: Vec::new(),
    };

    let reference = asymptotic_risk(loss, r, est.omega()).map(|rep| RiskRecord {
        p: 0.0,
        eta: rep.value,
        bound_kind: BoundKind::ExactTruncation,
        error_bound: rep.abs_error_estimate,
    });
    if !descending {
        match &reference {
            Ok(rec) => curve.records.push(rec.clone()),
            Err(e) => curve.failures.push((0.0, e.to_string())),
        }
    }
    for &p in p_grid {
        match exact_risk(loss, est, r, p, tol) {
            Ok((eta, bound)) => curve.records.push(RiskRecord {
                p,
                eta,
                bound_kind: BoundKind::ExactTruncation,
                error_bound: bound,
            }),
            Err(e) => curve.failures.push((p, e.to_string())),
        }
    }
    if descending {
        match reference {
            Ok(rec) => curve.records.push(rec),
            Err(e) => curve.failures.push((0.0, e.to_string())),
        }
    }
    Ok(curve)
}

/// One check row of [`verify_minimax_mse`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct MinimaxRow {
    pub r: u32,
    pub p: f64,
    pub value: f64,
    pub bound: f64,
    /// Threshold 1/(r−1) the certified value must stay strictly below.
    pub threshold: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Report of [`verify_minimax_mse`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct MinimaxReport {
    pub rows: Vec<MinimaxRow>,
    pub all_pass: bool,
}

/// Verify that the estimator p̂ = (r−2)/(N−1) keeps the normalized MSE
/// strictly below its worst-case value 1/(r−1) at every requested p — the
/// inequality is asserted rigorously as value + truncation bound < 1/(r−1).
///
/// Requires every r ≥ 3 (the estimator needs r−2 > 0 and the threshold
/// r−1 > 1). Failing rows are listed in the report with their margins.
pub fn verify_minimax_mse(r_list: &[u32], p_grid: &[f64]) -> Result<MinimaxReport> {
    if let Some(r) = r_list.iter().find(|r| **r < 3) {
        return Err(Error::domain(format!(
            "minimax-MSE verification needs r ≥ 3, got r = {r}"
        )));
    }
    let loss = Loss::mse();
    let mut rows = Vec::new();
    for &r in r_list {
        let est = EstimatorSpec::minimax_mse(r);
        let threshold = 1.0 / (r as f64 - 1.0);
        for &p in p_grid {
            let (value, bound) = exact_risk(&loss, &est, r, p, 1e-12 * threshold)?;
            let margin = threshold - (value + bound);
            rows.push(MinimaxRow {
                r,
                p,
                value,
                bound,
                threshold,
                margin,
                pass: margin > 0.0,
            });
        }
    }
    let all_pass = rows.iter().all(|row| row.pass);
    Ok(MinimaxReport { rows, all_pass })
}

/// One grid row of [`verify_flat_loss_dominance`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct DominanceRow {
    pub p: f64,
    pub eta: f64,
    pub bound: f64,
    pub eta_bar: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Outcome of [`verify_flat_loss_dominance`]: either the hypothesis gate
/// failed (the claim does not apply — a skip, not a failure) or the grid
/// was checked.
#[derive(Debug, Clone, serde::Serialize)]
pub enum DominanceOutcome {
    HypothesisViolation {
        reason: String,
    },
    Checked {
        rows: Vec<DominanceRow>,
        all_pass: bool,
    },
}

/// Verify the finite-p dominance guarantee for losses that are constant on
/// a wide enough flat middle: with p̂ = Ω/(N+1) and a loss constant on
/// [υ, υ′] ⊇ [Ω/(r+√r+1), Ω/(r−√r)], non-increasing left of υ and
/// non-decreasing right of υ′, the finite-p risk never exceeds the
/// asymptotic risk: η(p) ≤ η̄ for all p.
///
/// The flat region is read from the loss metadata (υ = ξ, υ′ = ξ′) and its
/// constancy is checked by sampling. A violated hypothesis yields
/// [`DominanceOutcome::HypothesisViolation`] — the conclusion is then not
/// claimed, so this is a skip rather than a failure.
pub fn verify_flat_loss_dominance(
    loss: &Loss,
    r: u32,
    omega: f64,
    p_grid: &[f64],
) -> Result<DominanceOutcome> {
    if r < 3 {
        return Err(Error::domain(
            "dominance verification needs r ≥ 3 (the window edge r−√r must stay positive)",
        ));
    }
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::domain(format!(
            "budget Ω must be positive and finite, got {omega}"
        )));
    }
    let rf = r as f64;
    let (upsilon, upsilon_prime) = (loss.xi(), loss.xi_prime());
    let lo_required = omega / (rf + rf.sqrt() + 1.0);
    let hi_required = omega / (rf - rf.sqrt());

    if upsilon >= upsilon_prime {
        return Ok(DominanceOutcome::HypothesisViolation {
            reason: format!(
                "loss '{}' has no flat interval: monotonicity edges ξ = {upsilon}, \
                 ξ′ = {upsilon_prime} do not bound a region of constancy",
                loss.name()
            ),
        });
    }
    if upsilon > lo_required || upsilon_prime < hi_required {
        return Ok(DominanceOutcome::HypothesisViolation {
            reason: format!(
                "flat region [{upsilon:.6}, {upsilon_prime:.6}] does not cover the \
                 required window [{lo_required:.6}, {hi_required:.6}] for Ω = {omega}, r = {r}"
            ),
        });
    }
    // Sampled constancy of the flat middle (open interior: the endpoints
    // themselves take the flanking segments' values under the right-limit
    // evaluation convention) and monotonicity of the flanks.
    let mid_value = loss.eval_raw(0.5 * (upsilon + upsilon_prime));
    for i in 0..=64u32 {
        let x = upsilon + (upsilon_prime - upsilon) * (i as f64 + 0.5) / 65.0;
        let v = loss.eval_raw(x);
        if (v - mid_value).abs() > 1e-12 * (1.0 + mid_value.abs()) {
            return Ok(DominanceOutcome::HypothesisViolation {
                reason: format!(
                    "loss '{}' is not constant on [{upsilon:.6}, {upsilon_prime:.6}]: \
                     L({x:.6}) = {v}, L(mid) = {mid_value}",
                    loss.name()
                ),
            });
        }
    }
    for i in 1..=64u32 {
        let t = i as f64 / 64.0;
        let (a, b) = (upsilon * (t - 1.0 / 64.0).max(1e-4), upsilon * t);
        if loss.eval_raw(a) < loss.eval_raw(b) - 1e-12 * (1.0 + mid_value.abs()) {
            return Ok(DominanceOutcome::HypothesisViolation {
                reason: format!(
                    "loss '{}' increases on the left flank near x = {b:.6}",
                    loss.name()
                ),
            });
        }
        let (a, b) = (
            upsilon_prime * (1.0 + 4.0 * (t - 1.0 / 64.0)),
            upsilon_prime * (1.0 + 4.0 * t),
        );
        if loss.eval_raw(b) < loss.eval_raw(a) - 1e-12 * (1.0 + mid_value.abs()) {
            return Ok(DominanceOutcome::HypothesisViolation {
                reason: format!(
                    "loss '{}' decreases on the right flank near x = {b:.6}",
                    loss.name()
                ),
            });
        }
    }

    let est = EstimatorSpec::with_budget(omega);
    let eta_bar_rep = asymptotic_risk(loss, r, omega)?;
    let eta_bar = eta_bar_rep.value;
    let mut rows = Vec::new();
    for &p in p_grid {
        let (eta, bound) = exact_risk(loss, &est, r, p, 1e-10 * (1.0 + eta_bar))?;
        let slack = bound + eta_bar_rep.abs_error_estimate;
        let margin = eta_bar - eta;
        rows.push(DominanceRow {
            p,
            eta,
            bound,
            eta_bar,
            margin,
            pass: eta <= eta_bar + slack,
        });
    }
    let all_pass = rows.iter().all(|row| row.pass);
    Ok(DominanceOutcome::Checked { rows, all_pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{PowerTerm, Segment};

    /// Brute-force reference: sum the series far past the certificate stop
    /// with fresh log-space pmf evaluations (independent of the walker).
    fn brute_force_risk(loss: &Loss, est: &EstimatorSpec, r: u32, p: f64, n_max: u64) -> f64 {
        let mut total = 0.0;
        for n in (r as u64..=n_max).rev() {
            // ln f(n) = ln C(n−1, r−1) + r ln p + (n−r) ln(1−p)
            let log_f = crate::special::ln_choose(n - 1, r as u64 - 1)
                + r as f64 * p.ln()
                + (n - r as u64) as f64 * (1.0 - p).ln();
            if log_f < -700.0 {
                continue;
            }
            total += log_f.exp() * loss.eval_raw(est.g(n, r) / p);
        }
        total
    }

    #[test]
    fn constant_loss_partial_sum_plus_tail_is_exactly_one() {
        let one = Loss::piecewise_power(
            "constant-one",
            vec![Segment {
                lo: 0.0,
                hi: f64::INFINITY,
                terms: vec![PowerTerm {
                    coef: 1.0,
                    power: 0.0,
                }],
            }],
            None,
            None,
            None,
            None,
        )
        .unwrap();
        for &(r, p) in &[(1u32, 0.5), (3, 0.2), (6, 0.05)] {
            let est = EstimatorSpec::with_budget(r as f64);
            let (value, bound) = exact_risk(&one, &est, r, p, 1e-9).unwrap();
            // Partial sum + tail·sup(1) reconstructs total probability 1.
            assert!(bound <= 1e-9, "r={r} p={p}: bound {bound:e}");
            assert!(
                (value + bound - 1.0).abs() < 1e-11,
                "r={r} p={p}: value {value} bound {bound:e}"
            );
        }
    }

    #[test]
    fn certificate_meets_tolerance_for_builtin_losses() {
        let losses = [
            Loss::mse(),
            Loss::mae(),
            Loss::generalized_interval(1.0, 1.0, 2.0, 2.0).unwrap(),
        ];
        let tol = 1e-10;
        for loss in &losses {
            for r in 2u32..=8 {
                for &p in &[0.5, 0.1, 0.01] {
                    let est = EstimatorSpec::unbiased(r);
                    let (value, bound) = exact_risk(loss, &est, r, p, tol).unwrap();
                    assert!(bound <= tol, "{} r={r} p={p}: bound {bound:e}", loss.name());
                    assert!(value.is_finite() && value >= 0.0);
                }
            }
        }
    }

    #[test]
    fn series_value_matches_brute_force_oracle() {
        let mse = Loss::mse();
        let est = EstimatorSpec::minimax_mse(5);
        let (value, bound) = exact_risk(&mse, &est, 5, 0.07, 1e-11).unwrap();
        let brute = brute_force_risk(&mse, &est, 5, 0.07, 3_000);
        assert!(
            (value - brute).abs() <= bound + 1e-12 * brute,
            "value {value}, brute {brute}, bound {bound:e}"
        );

        let mae = Loss::mae();
        let est = EstimatorSpec::with_budget(2.0);
        let (value, bound) = exact_risk(&mae, &est, 3, 0.2, 1e-11).unwrap();
        let brute = brute_force_risk(&mae, &est, 3, 0.2, 1_500);
        assert!(
            (value - brute).abs() <= bound + 1e-12 * brute,
            "value {value}, brute {brute}, bound {bound:e}"
        );
    }

    #[test]
    fn minimax_estimator_stays_below_its_bound_at_half() {
        // Normalized MSE of (r−2)/(N−1) at r=3, p=0.5 stays below 1/2.
        let (value, bound) =
            exact_risk(&Loss::mse(), &EstimatorSpec::minimax_mse(3), 3, 0.5, 1e-12).unwrap();
        assert!(value + bound < 0.5, "value {value} bound {bound:e}");
    }

    #[test]
    fn unbiased_estimator_approaches_its_small_p_limit() {
        // Normalized MSE of (r−1)/(N−1) tends to 1/(r−2) as p → 0; at
        // r = 5 and p = 1e−4 the relative gap is far below 1e−3.
        let (value, _) =
            exact_risk(&Loss::mse(), &EstimatorSpec::unbiased(5), 5, 1e-4, 1e-10).unwrap();
        let limit = 1.0 / 3.0;
        assert!(
            (value - limit).abs() < 1e-3 * limit,
            "value {value}, limit {limit}, rel {:e}",
            (value - limit).abs() / limit
        );
    }

    #[test]
    fn origin_divergent_loss_uses_envelope_certificate() {
        // L(x) = x^{−1/2} on (0,1), constant 1 beyond: L(0+) = ∞, so the
        // certificate must switch to the envelope route.
        let loss = Loss::piecewise_power(
            "inverse-sqrt-head",
            vec![
                Segment {
                    lo: 0.0,
                    hi: 1.0,
                    terms: vec![PowerTerm {
                        coef: 1.0,
                        power: -0.5,
                    }],
                },
                Segment {
                    lo: 1.0,
                    hi: f64::INFINITY,
                    terms: vec![PowerTerm {
                        coef: 1.0,
                        power: 0.0,
                    }],
                },
            ],
            None,
            None,
            None,
            None,
        )
        .unwrap();
        assert_eq!(loss.k_zero(), -0.5);
        let est = EstimatorSpec::unbiased(4);
        let (value, bound) = exact_risk(&loss, &est, 4, 0.3, 1e-9).unwrap();
        assert!(bound <= 1e-9, "bound {bound:e}");
        let brute = brute_force_risk(&loss, &est, 4, 0.3, 2_000);
        assert!(
            (value - brute).abs() <= bound + 1e-12 * brute,
            "value {value}, brute {brute}"
        );

        // A callback version of the same loss cannot derive the envelope
        // on its own…
        let cb = Loss::from_callback(
            "inverse-sqrt-callback",
            |x: f64| if x < 1.0 { x.powf(-0.5) } else { 1.0 },
            -0.5,
            0.0,
            1.0,
            1.0,
        )
        .unwrap();
        assert!(matches!(
            exact_risk(&cb, &est, 4, 0.3, 1e-9),
            Err(Error::NonConvergence { .. })
        ));
        // …but works once one is supplied.
        let envelope = Envelope {
            m: 1.0,
            k: -0.5,
            valid_to: 1.0,
        };
        let (cb_value, cb_bound) =
            exact_risk_with_envelope(&cb, &est, 4, 0.3, 1e-9, envelope).unwrap();
        assert!((cb_value - value).abs() <= bound + cb_bound + 1e-13);
    }

    #[test]
    fn simulation_is_deterministic_and_matches_the_series() {
        let mse = Loss::mse();
        let est = EstimatorSpec::minimax_mse(3);
        let cfg = SimConfig {
            samples: 200_000,
            seed: 7,
            batch: 4_096,
        };
        let (m1, s1) = simulate_risk(&mse, &est, 3, 0.1, &cfg).unwrap();
        let (m2, s2) = simulate_risk(&mse, &est, 3, 0.1, &cfg).unwrap();
        assert_eq!(
            m1.to_bits(),
            m2.to_bits(),
            "same config must be bitwise equal"
        );
        assert_eq!(s1.to_bits(), s2.to_bits());

        let (exact, _) = exact_risk(&mse, &est, 3, 0.1, 1e-10).unwrap();
        assert!(
            (m1 - exact).abs() < 4.0 * s1,
            "sim {m1} ± {s1}, exact {exact}"
        );

        // Different batch sizes reshuffle the streams but stay within
        // Monte Carlo error of each other.
        let cfg_b = SimConfig { batch: 977, ..cfg };
        let (m3, s3) = simulate_risk(&mse, &est, 3, 0.1, &cfg_b).unwrap();
        assert!((m3 - exact).abs() < 4.0 * s3);
    }

    #[test]
    fn simulated_stopping_time_has_negative_binomial_mean() {
        // With L(x) = 1/x and g(n) = 1/n, the simulated quantity is N·p,
        // whose mean is r at every p.
        let inv = Loss::from_callback("reciprocal", |x: f64| 1.0 / x, -1.0, 0.0, 1.0, 1.0).unwrap();
        let est = EstimatorSpec::ShiftedReciprocal { omega: 1.0, c: 0 };
        let cfg = SimConfig {
            samples: 1_000_000,
            seed: 11,
            batch: 65_536,
        };
        let (mean, se) = simulate_risk(&inv, &est, 2, 0.5, &cfg).unwrap();
        assert!((mean - 2.0).abs() < 4.0 * se, "mean {mean} ± {se}");
    }

    #[test]
    fn unbiasedness_and_bias_identities() {
        // Identity loss turns the simulated mean into E[g(N)]/p.
        let ident = Loss::from_callback("identity", |x: f64| x, 1.0, 1.0, 1.0, 1.0).unwrap();
        let cfg = SimConfig {
            samples: 400_000,
            seed: 3,
            batch: 32_768,
        };
        for &(r, p) in &[(2u32, 0.3), (5, 0.07)] {
            // (r−1)/(N−1) is unbiased: E[g(N)]/p = 1.
            let (mean, se) =
                simulate_risk(&ident, &EstimatorSpec::unbiased(r), r, p, &cfg).unwrap();
            assert!(
                (mean - 1.0).abs() < 4.0 * se,
                "r={r} p={p}: mean {mean} ± {se}"
            );
        }
        // (r−2)/(N−1) under-shoots by exactly 1/(r−1) in relative terms.
        let r = 4u32;
        let (mean, se) =
            simulate_risk(&ident, &EstimatorSpec::minimax_mse(r), r, 0.2, &cfg).unwrap();
        let want = 1.0 - 1.0 / (r as f64 - 1.0);
        assert!(
            (mean - want).abs() < 4.0 * se,
            "mean {mean} ± {se}, want {want}"
        );
    }

    #[test]
    fn monte_carlo_agrees_with_series_across_random_configurations() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
        let losses = [
            Loss::mse(),
            Loss::mae(),
            Loss::generalized_interval(1.0, 1.5, 2.0, 3.0).unwrap(),
        ];
        let mut misses = 0;
        for i in 0..40u64 {
            let loss = &losses[(i % 3) as usize];
            let r = rng.gen_range(2u32..7);
            let p = 10f64.powf(rng.gen_range(-2.5..-0.3));
            let omega = rng.gen_range(0.5..1.5) * r as f64;
            let est = EstimatorSpec::with_budget(omega);
            let (exact, _) = exact_risk(loss, &est, r, p, 1e-9).unwrap();
            let cfg = SimConfig {
                samples: 100_000,
                seed: 1000 + i,
                batch: 25_000,
            };
            let (mean, se) = simulate_risk(loss, &est, r, p, &cfg).unwrap();
            if (mean - exact).abs() >= 4.0 * se {
                misses += 1;
            }
        }
        // 4σ misses should be rare: allow 2 of 40.
        assert!(misses <= 2, "{misses}/40 configurations outside 4σ");
    }

    #[test]
    fn sweep_produces_monotone_records_with_reference() {
        let mse = Loss::mse();
        let est = EstimatorSpec::minimax_mse(3);
        let grid = [0.5, 0.1, 0.01, 1e-3];
        let curve = risk_sweep(&mse, &est, 3, &grid, 1e-10).unwrap();
        assert!(curve.failures.is_empty());
        assert_eq!(curve.records.len(), grid.len() + 1);
        // Descending grid: reference record p = 0 comes last.
        let last = curve.records.last().unwrap();
        assert_eq!(last.p, 0.0);
        assert!((last.eta - 0.5).abs() < 1e-10, "η̄ = {}", last.eta);
        // All finite-p values below the worst case 1/2, approaching it.
        for w in curve.records.windows(2) {
            assert!(w[0].p > w[1].p);
        }
        for rec in &curve.records[..grid.len()] {
            assert!(rec.eta < 0.5, "p={}: η = {}", rec.p, rec.eta);
        }
        let etas: Vec<f64> = curve.records[..grid.len()].iter().map(|r| r.eta).collect();
        for w in etas.windows(2) {
            assert!(w[0] < w[1], "risk should approach 1/2 from below: {etas:?}");
        }

        // Single-point grid: one record plus the reference.
        let single = risk_sweep(&mse, &est, 3, &[0.25], 1e-10).unwrap();
        assert_eq!(single.records.len(), 2);

        // Ascending grids put the reference first.
        let asc = risk_sweep(&mse, &est, 3, &[1e-3, 0.1], 1e-10).unwrap();
        assert_eq!(asc.records[0].p, 0.0);
        for w in asc.records.windows(2) {
            assert!(w[0].p < w[1].p);
        }
    }

    #[test]
    fn convergence_to_the_asymptotic_value_across_p_and_shifts() {
        // |η(p) − η̄| decreases along p ∈ {1e−1,…,1e−4} and lands below 1%
        // at p = 1e−4, for both built-in losses and all three shifts c.
        let cases: [(Loss, u32, f64); 2] = [(Loss::mse(), 5, 3.0), (Loss::mae(), 4, 2.6741228861)];
        for (loss, r, omega) in &cases {
            let eta_bar = asymptotic_risk(loss, *r, *omega).unwrap().value;
            let mut at_1e4 = Vec::new();
            for c in [-1i64, 0, 1] {
                let est = EstimatorSpec::ShiftedReciprocal { omega: *omega, c };
                let mut gaps = Vec::new();
                for &p in &[1e-1, 1e-2, 1e-3, 1e-4] {
                    let (eta, _) = exact_risk(loss, &est, *r, p, 1e-11).unwrap();
                    gaps.push((eta - eta_bar).abs() / eta_bar);
                }
                for w in gaps.windows(2) {
                    assert!(
                        w[1] < w[0],
                        "{} c={c}: gaps not decreasing: {gaps:?}",
                        loss.name()
                    );
                }
                assert!(
                    gaps[3] < 0.01,
                    "{} c={c}: relative gap at p=1e-4 is {:.3e}",
                    loss.name(),
                    gaps[3]
                );
                let (eta, _) = exact_risk(loss, &est, *r, 1e-4, 1e-11).unwrap();
                at_1e4.push(eta);
            }
            // The three shifts share Ω, so their curves collapse onto the
            // same limit: pairwise differences below 1% at p = 1e−4.
            for i in 0..at_1e4.len() {
                for j in i + 1..at_1e4.len() {
                    assert!(
                        (at_1e4[i] - at_1e4[j]).abs() < 0.01 * eta_bar,
                        "{}: shift curves differ: {at_1e4:?}",
                        loss.name()
                    );
                }
            }
        }
    }

    #[test]
    fn minimax_verification_passes_for_valid_r_and_rejects_r_two() {
        let report = verify_minimax_mse(&[3, 5, 10], &[0.9, 0.5, 0.1, 1e-3]).unwrap();
        assert!(report.all_pass);
        assert_eq!(report.rows.len(), 12);
        for row in &report.rows {
            assert!(
                row.margin > 0.0,
                "r={} p={}: margin {}",
                row.r,
                row.p,
                row.margin
            );
        }
        assert!(matches!(
            verify_minimax_mse(&[2], &[0.5]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn dominance_verification_gates_on_hypotheses_and_passes_when_met() {
        // Flat interval [1/3, 2] covers [3/7, 3/2] at Ω = 3, r = 4.
        let loss = Loss::generalized_interval(1.0, 1.0, 2.0, 3.0).unwrap();
        let outcome = verify_flat_loss_dominance(&loss, 4, 3.0, &[0.5, 0.1, 0.01]).unwrap();
        match outcome {
            DominanceOutcome::Checked { rows, all_pass } => {
                assert!(all_pass, "rows: {rows:?}");
                assert_eq!(rows.len(), 3);
            }
            DominanceOutcome::HypothesisViolation { reason } => {
                panic!("hypotheses unexpectedly rejected: {reason}")
            }
        }

        // Too narrow a flat region (υ = 2/3 > 3/7): a skip, not a failure.
        let narrow = Loss::generalized_interval(1.0, 1.0, 2.0, 1.5).unwrap();
        assert!(matches!(
            verify_flat_loss_dominance(&narrow, 4, 3.0, &[0.5]).unwrap(),
            DominanceOutcome::HypothesisViolation { .. }
        ));

        // Absolute-error loss is constant only at a point.
        assert!(matches!(
            verify_flat_loss_dominance(&Loss::mae(), 4, 3.0, &[0.5]).unwrap(),
            DominanceOutcome::HypothesisViolation { .. }
        ));

        // r = 2 violates the precondition outright.
        assert!(matches!(
            verify_flat_loss_dominance(&loss, 2, 3.0, &[0.5]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn estimator_validation_rejects_bad_shifts_and_tables() {
        // c = −1 needs r ≥ 2: at r = 1 the first index gives g(1) = Ω/0.
        assert!(EstimatorSpec::unbiased(1).validate_for(1).is_err());
        assert!(EstimatorSpec::unbiased(2).validate_for(2).is_ok());
        let bad = EstimatorSpec::CustomTable {
            values: vec![0.5, 0.0],
            tail_omega: 2.0,
            tail_c: 1,
        };
        assert!(bad.validate_for(3).is_err());
        let table = EstimatorSpec::CustomTable {
            values: vec![0.9, 0.5, 0.3],
            tail_omega: 2.0,
            tail_c: 1,
        };
        assert!(table.validate_for(3).is_ok());
        assert_eq!(table.g(3, 3), 0.9);
        assert_eq!(table.g(5, 3), 0.3);
        assert_eq!(table.g(6, 3), 2.0 / 7.0);
        // Table values participate in the series.
        let (v_table, _) = exact_risk(&Loss::mse(), &table, 3, 0.4, 1e-10).unwrap();
        let plain = EstimatorSpec::ShiftedReciprocal { omega: 2.0, c: 1 };
        let (v_plain, _) = exact_risk(&Loss::mse(), &plain, 3, 0.4, 1e-10).unwrap();
        assert!((v_table - v_plain).abs() > 1e-6);
    }
}
