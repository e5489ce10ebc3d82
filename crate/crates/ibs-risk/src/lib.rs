//! Risk analysis for inverse binomial sampling estimators.
//!
//! Inverse binomial sampling draws Bernoulli trials until a target number
//! of successes `r` arrives, then estimates the success probability `p`
//! from the stopping time `N`. This crate evaluates the quality of such
//! estimators three ways, all cross-checkable against each other:
//!
//! - [`asymptotic_risk`] — the small-`p` limit `η̄(Ω, r)` of the
//!   normalized risk of estimators `p̂ = Ω/(N + c)`, via closed-form
//!   assembly for piecewise-power losses or adaptive quadrature;
//! - [`find_optimum`] — the budget `Ω*` minimizing `η̄` and the optimal
//!   risk value, with stationarity and multiplicity diagnostics;
//! - [`exact_risk`] / [`simulate_risk`] — the exact finite-`p` risk by
//!   certified series summation, and an independent Monte Carlo check.
//!
//! The [`verify`] module bundles the self-checks behind the CLI `verify`
//! subcommand; [`cli`] implements the command-line front end.

// Frozen reference constants keep every published digit; `!(x > 0)`-style
// guards are deliberate NaN rejections.
#![allow(clippy::excessive_precision)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotic;
pub mod cli;
pub mod error;
pub mod finite;
pub mod loss;
pub mod optimizer;
pub mod quad;
pub mod special;
pub mod verify;

pub use asymptotic::{
    asymptotic_risk, asymptotic_risk_adaptive, asymptotic_risk_derivative, asymptotic_risk_nu_form,
};
pub use error::{Error, Result};
pub use finite::{exact_risk, risk_sweep, simulate_risk, EstimatorSpec, RiskCurve, SimConfig};
pub use loss::Loss;
pub use optimizer::{find_optimum, stationarity_check, OptimizerConfig, OptimumResult};
pub use quad::QuadratureReport;
