//! Command-line front end: risk evaluation, optimization, sweeps,
//! simulation and self-verification with JSON/CSV output.
//!
//! Exit codes are a stable contract: 0 success, 1 usage/IO/parse errors,
//! 2 divergent risk integral, 3 no finite minimizer, 4 verification
//! failure. Machine-readable error JSON goes to stderr; every produced
//! output is accompanied by a run manifest (embedded in JSON outputs,
//! a sibling `.manifest.json` for `--out` files, stderr otherwise).

use crate::error::{Error, Result};
use crate::finite::{
    exact_risk, risk_sweep, simulate_risk, BoundKind, EstimatorSpec, RiskRecord, SimConfig,
};
use crate::loss::{Loss, PowerTerm, Segment};
use crate::optimizer::{find_optimum, OptimizerConfig};
use crate::verify::{all_pass, run_suite, CheckStatus};
use crate::{asymptotic_risk, asymptotic_risk_adaptive};
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Default truncation tolerance for exact-series commands; overridable
/// with `--tol` or the `IBSRISK_EXACT_TOL` environment variable.
const DEFAULT_EXACT_TOL: f64 = 1e-10;
/// Default optimizer tolerance; overridable with `--tol` or
/// `IBSRISK_OPT_TOL`.
const DEFAULT_OPT_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(
    name = "ibs-risk",
    version,
    about = "Estimation risk of inverse binomial sampling: asymptotic risk, \
             optimal budgets, exact finite-p series and Monte Carlo"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Asymptotic risk η̄ for a loss at given r and Ω (JSON to stdout).
    Asymptotic {
        #[command(flatten)]
        loss: LossArg,
        #[arg(long)]
        r: u32,
        #[arg(long)]
        omega: f64,
        /// analytic (piecewise closed assembly), adaptive (quadrature) or
        /// both (reports their agreement).
        #[arg(long, default_value = "analytic")]
        method: String,
    },
    /// Minimize η̄ over Ω (JSON OptimumResult to stdout).
    Optimize {
        #[command(flatten)]
        loss: LossArg,
        #[arg(long)]
        r: u32,
        /// Relative convergence tolerance on the minimizer.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Exact finite-p risk η(p) with truncation certificate (CSV).
    Risk {
        #[command(flatten)]
        loss: LossArg,
        #[command(flatten)]
        est: EstimatorArg,
        #[arg(long)]
        r: u32,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact risk across a p grid, with the asymptotic reference row (CSV).
    Sweep {
        #[command(flatten)]
        loss: LossArg,
        #[command(flatten)]
        est: EstimatorArg,
        #[arg(long)]
        r: u32,
        /// Comma-separated values, or logspace:LO:HI:N.
        #[arg(long = "p-grid")]
        p_grid: String,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of η(p) (CSV row with standard error).
    Simulate {
        #[command(flatten)]
        loss: LossArg,
        #[command(flatten)]
        est: EstimatorArg,
        #[arg(long)]
        r: u32,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 65_536)]
        batch: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run self-verification suites; exit 0 only if every check passes.
    Verify {
        /// special-functions, mse-minimax, mae-stationarity,
        /// interval-guarantee, convergence, or all.
        #[arg(long)]
        suite: String,
        /// Inclusive range A..B of success counts for suites that sweep r.
        #[arg(long = "r-range", default_value = "2..10")]
        r_range: String,
    },
}

#[derive(Args)]
struct LossArg {
    /// Built-in name (mse, mae, constant-one), inline spec
    /// (interval:mu1=..,mu2=.. or generalized_interval:a1=..,a2=..,
    /// mu1=..,mu2=..), or path to a loss description JSON file.
    #[arg(long)]
    loss: String,
}

#[derive(Args)]
struct EstimatorArg {
    /// Estimator family; only the reciprocal family "omega/(n+c)" exists,
    /// use --table for tabulated heads.
    #[arg(long, default_value = "omega/(n+c)")]
    estimator: String,
    /// Budget Ω of the reciprocal rule g(n) = Ω/(n+c).
    #[arg(long)]
    omega: Option<f64>,
    /// Index shift c of the reciprocal rule.
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    c: i64,
    /// JSON file with {"values": [...], "tail_omega": Ω, "tail_c": c}.
    #[arg(long)]
    table: Option<PathBuf>,
}

impl EstimatorArg {
    fn build(&self) -> Result<EstimatorSpec> {
        if let Some(path) = &self.table {
            let text = std::fs::read_to_string(path)?;
            #[derive(serde::Deserialize)]
            struct TableFile {
                values: Vec<f64>,
                tail_omega: f64,
                tail_c: i64,
            }
            let t: TableFile = serde_json::from_str(&text)
                .map_err(|e| Error::schema(format!("estimator table: {e}")))?;
            return Ok(EstimatorSpec::CustomTable {
                values: t.values,
                tail_omega: t.tail_omega,
                tail_c: t.tail_c,
            });
        }
        if self.estimator != "omega/(n+c)" {
            return Err(Error::domain(format!(
                "unknown estimator family '{}'; use \"omega/(n+c)\" or --table",
                self.estimator
            )));
        }
        let omega = self
            .omega
            .ok_or_else(|| Error::domain("the reciprocal estimator needs --omega".to_string()))?;
        Ok(EstimatorSpec::ShiftedReciprocal { omega, c: self.c })
    }
}

// ---------------------------------------------------------------------------
// Loss description files

/// On-disk loss description. `hi: "inf"` marks an unbounded segment; the
/// segments must tile (0, ∞) contiguously. Built-in kinds carry their
/// parameters in `params` instead of segments.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct LossFile {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<SegmentFile>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(rename = "K_prime", default, skip_serializing_if = "Option::is_none")]
    pub k_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_prime: Option<f64>,
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct SegmentFile {
    pub lo: f64,
    pub hi: BoundFile,
    pub terms: Vec<TermFile>,
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct TermFile {
    pub coef: f64,
    pub power: f64,
}

/// Segment upper bound: a number, or the string "inf".
#[derive(Debug, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
pub enum BoundFile {
    Number(f64),
    Word(String),
}

impl BoundFile {
    fn value(&self) -> Result<f64> {
        match self {
            BoundFile::Number(x) => Ok(*x),
            BoundFile::Word(w) if w == "inf" => Ok(f64::INFINITY),
            BoundFile::Word(w) => Err(Error::schema(format!(
                "segment bound must be a number or \"inf\", got \"{w}\""
            ))),
        }
    }

    fn from_value(x: f64) -> Self {
        if x.is_infinite() {
            BoundFile::Word("inf".to_string())
        } else {
            BoundFile::Number(x)
        }
    }
}

fn param_f64(params: &serde_json::Map<String, serde_json::Value>, key: &str) -> Result<f64> {
    params
        .get(key)
        .and_then(|v| v.as_f64())
        .ok_or_else(|| Error::schema(format!("missing numeric parameter '{key}'")))
}

/// Build a [`Loss`] from a parsed description.
pub fn loss_from_schema(file: &LossFile) -> Result<Loss> {
    match file.kind.as_str() {
        "mse" => Ok(Loss::mse()),
        "mae" => Ok(Loss::mae()),
        "interval" => Loss::interval_confidence(
            param_f64(&file.params, "mu1")?,
            param_f64(&file.params, "mu2")?,
        ),
        "generalized_interval" => Loss::generalized_interval(
            param_f64(&file.params, "a1")?,
            param_f64(&file.params, "a2")?,
            param_f64(&file.params, "mu1")?,
            param_f64(&file.params, "mu2")?,
        ),
        "piecewise_power" => {
            let mut segments = Vec::with_capacity(file.segments.len());
            for s in &file.segments {
                segments.push(Segment {
                    lo: s.lo,
                    hi: s.hi.value()?,
                    terms: s
                        .terms
                        .iter()
                        .map(|t| PowerTerm {
                            coef: t.coef,
                            power: t.power,
                        })
                        .collect(),
                });
            }
            Loss::piecewise_power(
                file.name.clone().unwrap_or_else(|| "piecewise".to_string()),
                segments,
                file.k,
                file.k_prime,
                file.xi,
                file.xi_prime,
            )
        }
        other => Err(Error::schema(format!(
            "unknown loss kind '{other}'; expected mse, mae, interval, \
             generalized_interval or piecewise_power"
        ))),
    }
}

/// Serialize a piecewise loss back to its file form (callback losses have
/// no serializable description).
pub fn loss_to_schema(loss: &Loss) -> Result<LossFile> {
    let segments = loss.segments().ok_or_else(|| {
        Error::schema("callback losses cannot be serialized to a description file")
    })?;
    Ok(LossFile {
        kind: "piecewise_power".to_string(),
        name: Some(loss.name().to_string()),
        params: serde_json::Map::new(),
        segments: segments
            .iter()
            .map(|s| SegmentFile {
                lo: s.lo,
                hi: BoundFile::from_value(s.hi),
                terms: s
                    .terms
                    .iter()
                    .map(|t| TermFile {
                        coef: t.coef,
                        power: t.power,
                    })
                    .collect(),
            })
            .collect(),
        k: Some(loss.k_zero()),
        k_prime: Some(loss.k_inf()),
        xi: Some(loss.xi()),
        xi_prime: Some(loss.xi_prime()),
    })
}

fn parse_inline_params(spec: &str) -> Result<serde_json::Map<String, serde_json::Value>> {
    let mut map = serde_json::Map::new();
    for piece in spec.split(',') {
        let (key, value) = piece.split_once('=').ok_or_else(|| {
            Error::schema(format!("inline loss parameter '{piece}' is not key=value"))
        })?;
        let number: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::schema(format!("parameter '{key}' value '{value}' not numeric")))?;
        map.insert(key.trim().to_string(), serde_json::json!(number));
    }
    Ok(map)
}

/// Resolve a `--loss` argument: built-in name, inline spec, or file path.
pub fn load_loss(spec: &str) -> Result<Loss> {
    match spec {
        "mse" => return Ok(Loss::mse()),
        "mae" => return Ok(Loss::mae()),
        "constant-one" => return Ok(crate::verify::constant_one_loss()),
        _ => {}
    }
    if let Some(rest) = spec.strip_prefix("interval:") {
        let params = parse_inline_params(rest)?;
        return loss_from_schema(&LossFile {
            kind: "interval".to_string(),
            name: None,
            params,
            segments: Vec::new(),
            k: None,
            k_prime: None,
            xi: None,
            xi_prime: None,
        });
    }
    if let Some(rest) = spec.strip_prefix("generalized_interval:") {
        let params = parse_inline_params(rest)?;
        return loss_from_schema(&LossFile {
            kind: "generalized_interval".to_string(),
            name: None,
            params,
            segments: Vec::new(),
            k: None,
            k_prime: None,
            xi: None,
            xi_prime: None,
        });
    }
    let text = std::fs::read_to_string(Path::new(spec))?;
    let file: LossFile =
        serde_json::from_str(&text).map_err(|e| Error::schema(format!("loss file: {e}")))?;
    loss_from_schema(&file)
}

// ---------------------------------------------------------------------------
// Grids, manifests, output plumbing

/// Parse a p-grid: comma-separated probabilities or
/// `logspace:LO:HI:N` (N log-spaced points from LO to HI inclusive).
/// The result is sorted descending and deduplicated.
pub fn parse_p_grid(spec: &str) -> Result<Vec<f64>> {
    let mut grid: Vec<f64> = if let Some(rest) = spec.strip_prefix("logspace:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::domain(
                "logspace grid must be logspace:LO:HI:N".to_string(),
            ));
        }
        let lo: f64 = parts[0]
            .parse()
            .map_err(|_| Error::domain(format!("bad logspace bound '{}'", parts[0])))?;
        let hi: f64 = parts[1]
            .parse()
            .map_err(|_| Error::domain(format!("bad logspace bound '{}'", parts[1])))?;
        let n: usize = parts[2]
            .parse()
            .map_err(|_| Error::domain(format!("bad logspace count '{}'", parts[2])))?;
        if n == 0 || !(lo > 0.0) || !(hi > 0.0) {
            return Err(Error::domain(
                "logspace grid needs positive bounds and at least one point".to_string(),
            ));
        }
        if n == 1 {
            vec![lo]
        } else {
            let (la, lb) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    } else {
        let mut out = Vec::new();
        for tok in spec.split(',') {
            out.push(
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::domain(format!("grid entry '{tok}' is not a number")))?,
            );
        }
        out
    };
    for p in &grid {
        if !(*p > 0.0 && *p < 1.0) {
            return Err(Error::domain(format!(
                "grid probability {p} outside (0, 1)"
            )));
        }
    }
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();
    Ok(grid)
}

/// Parse an inclusive `A..B` range of success counts.
pub fn parse_r_range(spec: &str) -> Result<(u32, u32)> {
    let (a, b) = spec
        .split_once("..")
        .ok_or_else(|| Error::domain(format!("r range '{spec}' is not A..B")))?;
    let lo: u32 = a
        .trim()
        .parse()
        .map_err(|_| Error::domain(format!("bad range start '{a}'")))?;
    let hi: u32 = b
        .trim()
        .parse()
        .map_err(|_| Error::domain(format!("bad range end '{b}'")))?;
    if lo == 0 || hi < lo {
        return Err(Error::domain(format!(
            "r range must satisfy 1 ≤ A ≤ B, got {lo}..{hi}"
        )));
    }
    Ok((lo, hi))
}

/// Provenance record attached to every output.
#[derive(Debug, serde::Serialize)]
pub struct RunManifest {
    pub command: String,
    pub params: serde_json::Value,
    pub version: &'static str,
    pub seeds: Vec<u64>,
    pub timestamp: String,
}

impl RunManifest {
    fn new(command: &str, params: serde_json::Value, seeds: Vec<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            params,
            version: env!("CARGO_PKG_VERSION"),
            seeds,
            timestamp: chrono::Utc::now().to_rfc3339(),
        }
    }
}

fn env_tol(var: &str, fallback: f64) -> f64 {
    std::env::var(var)
        .ok()
        .and_then(|s| s.parse::<f64>().ok())
        .filter(|t| *t > 0.0 && t.is_finite())
        .unwrap_or(fallback)
}

fn emit_error_json(err: &Error) {
    let payload = serde_json::json!({
        "error": { "kind": err.kind(), "message": err.to_string() }
    });
    eprintln!("{payload}");
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Divergence(_) => 2,
        Error::NoOptimum(_) => 3,
        _ => 1,
    }
}

/// CSV row in the published column order, floats at 17 significant digits.
fn csv_row(p: f64, eta: f64, kind: &str, bound: f64) -> String {
    format!("{p:.16e},{eta:.16e},{kind},{bound:.16e}")
}

fn bound_kind_token(kind: BoundKind) -> &'static str {
    match kind {
        BoundKind::ExactTruncation => "exact_truncation",
        BoundKind::MonteCarloStderr => "monte_carlo_stderr",
    }
}

/// Write CSV either to stdout (manifest to stderr) or to a file with a
/// sibling `<file>.manifest.json`.
fn deliver_csv(lines: &[String], out: Option<&Path>, manifest: &RunManifest) -> Result<()> {
    let mut body = String::from("p,eta,bound_kind,error_bound\n");
    for line in lines {
        body.push_str(line);
        body.push('\n');
    }
    match out {
        Some(path) => {
            std::fs::write(path, body)?;
            let manifest_path = sibling_manifest_path(path);
            std::fs::write(
                manifest_path,
                serde_json::to_string_pretty(manifest)
                    .map_err(|e| Error::schema(format!("manifest serialization: {e}")))?,
            )?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes())?;
            eprintln!("{}", serde_json::json!({ "manifest": manifest }));
        }
    }
    Ok(())
}

fn sibling_manifest_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

// ---------------------------------------------------------------------------
// Command bodies

fn cmd_asymptotic(loss: &Loss, r: u32, omega: f64, method: &str) -> Result<serde_json::Value> {
    let (value, abs_error, agreement) = match method {
        "analytic" => {
            let rep = asymptotic_risk(loss, r, omega)?;
            (rep.value, rep.abs_error_estimate, None)
        }
        "adaptive" => {
            let rep = asymptotic_risk_adaptive(loss, r, omega)?;
            (rep.value, rep.abs_error_estimate, None)
        }
        "both" => {
            let a = asymptotic_risk(loss, r, omega)?;
            let b = asymptotic_risk_adaptive(loss, r, omega)?;
            let denom = a.value.abs().max(1e-300);
            (
                a.value,
                a.abs_error_estimate,
                Some((a.value - b.value).abs() / denom),
            )
        }
        other => {
            return Err(Error::domain(format!(
                "unknown method '{other}'; expected analytic, adaptive or both"
            )))
        }
    };
    let mut payload = serde_json::json!({
        "eta_bar": value,
        "abs_error": abs_error,
        "method": method,
        "loss": loss.name(),
        "r": r,
        "omega": omega,
    });
    if let Some(agr) = agreement {
        payload["agreement"] = serde_json::json!(agr);
    }
    Ok(payload)
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Asymptotic {
            loss,
            r,
            omega,
            method,
        } => {
            let l = load_loss(&loss.loss)?;
            let mut payload = cmd_asymptotic(&l, r, omega, &method)?;
            let manifest = RunManifest::new(
                "asymptotic",
                serde_json::json!({"loss": loss.loss, "r": r, "omega": omega, "method": method}),
                vec![],
            );
            payload["manifest"] = serde_json::to_value(&manifest)
                .map_err(|e| Error::schema(format!("manifest serialization: {e}")))?;
            println!(
                "{}",
                serde_json::to_string_pretty(&payload)
                    .map_err(|e| Error::schema(format!("output serialization: {e}")))?
            );
            Ok(0)
        }
        Command::Optimize { loss, r, tol } => {
            let l = load_loss(&loss.loss)?;
            let tol = tol.unwrap_or_else(|| env_tol("IBSRISK_OPT_TOL", DEFAULT_OPT_TOL));
            let config = OptimizerConfig {
                derivative_tol: tol,
                interval_tol: tol,
                ..OptimizerConfig::default()
            };
            let result = find_optimum(&l, r, &config)?;
            let manifest = RunManifest::new(
                "optimize",
                serde_json::json!({"loss": loss.loss, "r": r, "tol": tol}),
                vec![],
            );
            let mut payload = serde_json::to_value(&result)
                .map_err(|e| Error::schema(format!("output serialization: {e}")))?;
            payload["loss"] = serde_json::json!(l.name());
            payload["r"] = serde_json::json!(r);
            payload["manifest"] = serde_json::to_value(&manifest)
                .map_err(|e| Error::schema(format!("manifest serialization: {e}")))?;
            println!(
                "{}",
                serde_json::to_string_pretty(&payload)
                    .map_err(|e| Error::schema(format!("output serialization: {e}")))?
            );
            Ok(0)
        }
        Command::Risk {
            loss,
            est,
            r,
            p,
            tol,
            out,
        } => {
            let l = load_loss(&loss.loss)?;
            let e = est.build()?;
            let tol = tol.unwrap_or_else(|| env_tol("IBSRISK_EXACT_TOL", DEFAULT_EXACT_TOL));
            let manifest = RunManifest::new(
                "risk",
                serde_json::json!({
                    "loss": loss.loss, "estimator": e.describe(), "r": r, "p": p, "tol": tol
                }),
                vec![],
            );
            match exact_risk(&l, &e, r, p, tol) {
                Ok((eta, bound)) => {
                    let rows = vec![csv_row(p, eta, "exact_truncation", bound)];
                    deliver_csv(&rows, out.as_deref(), &manifest)?;
                    Ok(0)
                }
                Err(err) => {
                    let rows = vec![csv_row(p, f64::NAN, "error", f64::INFINITY)];
                    deliver_csv(&rows, out.as_deref(), &manifest)?;
                    emit_error_json(&err);
                    Ok(exit_code_for(&err))
                }
            }
        }
        Command::Sweep {
            loss,
            est,
            r,
            p_grid,
            tol,
            out,
        } => {
            let l = load_loss(&loss.loss)?;
            let e = est.build()?;
            let grid = parse_p_grid(&p_grid)?;
            let tol = tol.unwrap_or_else(|| env_tol("IBSRISK_EXACT_TOL", DEFAULT_EXACT_TOL));
            let curve = risk_sweep(&l, &e, r, &grid, tol)?;
            let manifest = RunManifest::new(
                "sweep",
                serde_json::json!({
                    "loss": loss.loss, "estimator": e.describe(), "r": r,
                    "p_grid": grid, "tol": tol,
                    "failures": curve.failures.iter().map(|(p, m)| {
                        serde_json::json!({"p": p, "message": m})
                    }).collect::<Vec<_>>(),
                }),
                vec![],
            );
            // Merge records and failure markers, keeping p descending with
            // the asymptotic reference (p = 0) last.
            let mut rows: Vec<(f64, String)> = curve
                .records
                .iter()
                .map(|rec: &RiskRecord| {
                    (
                        rec.p,
                        csv_row(
                            rec.p,
                            rec.eta,
                            bound_kind_token(rec.bound_kind),
                            rec.error_bound,
                        ),
                    )
                })
                .collect();
            for (p, _) in &curve.failures {
                rows.push((*p, csv_row(*p, f64::NAN, "error", f64::INFINITY)));
            }
            rows.sort_by(|a, b| b.0.total_cmp(&a.0));
            let lines: Vec<String> = rows.into_iter().map(|(_, line)| line).collect();
            deliver_csv(&lines, out.as_deref(), &manifest)?;
            if curve.failures.is_empty() {
                Ok(0)
            } else {
                for (p, msg) in &curve.failures {
                    emit_error_json(&Error::domain(format!("p={p}: {msg}")));
                }
                Ok(1)
            }
        }
        Command::Simulate {
            loss,
            est,
            r,
            p,
            samples,
            seed,
            batch,
            out,
        } => {
            let l = load_loss(&loss.loss)?;
            let e = est.build()?;
            let cfg = SimConfig {
                samples,
                seed,
                batch,
            };
            let (mean, stderr) = simulate_risk(&l, &e, r, p, &cfg)?;
            let manifest = RunManifest::new(
                "simulate",
                serde_json::json!({
                    "loss": loss.loss, "estimator": e.describe(), "r": r, "p": p,
                    "samples": samples, "batch": batch,
                }),
                vec![seed],
            );
            let rows = vec![csv_row(p, mean, "monte_carlo_stderr", stderr)];
            deliver_csv(&rows, out.as_deref(), &manifest)?;
            Ok(0)
        }
        Command::Verify { suite, r_range } => {
            let (r_lo, r_hi) = parse_r_range(&r_range)?;
            let lines = run_suite(&suite, r_lo, r_hi)?;
            let mut n_fail = 0;
            let mut n_skip = 0;
            for line in &lines {
                let tag = match line.status {
                    CheckStatus::Pass => "PASS",
                    CheckStatus::Fail => {
                        n_fail += 1;
                        "FAIL"
                    }
                    CheckStatus::Skip => {
                        n_skip += 1;
                        "SKIP"
                    }
                };
                println!("[{tag}] {} / {} — {}", line.suite, line.name, line.detail);
            }
            println!(
                "{} checks: {} passed, {n_fail} failed, {n_skip} skipped",
                lines.len(),
                lines.len() - n_fail - n_skip
            );
            if all_pass(&lines) {
                Ok(0)
            } else {
                Ok(4)
            }
        }
    }
}

/// Entry point used by the binary: parses arguments, runs the command and
/// maps every failure mode onto the published exit codes.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            return 1;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            emit_error_json(&err);
            exit_code_for(&err)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_and_inline_losses_load() {
        assert_eq!(load_loss("mse").unwrap().name(), "mse");
        assert_eq!(load_loss("mae").unwrap().name(), "mae");
        assert_eq!(load_loss("constant-one").unwrap().name(), "constant-one");
        let l = load_loss("generalized_interval:a1=1,a2=2,mu1=3,mu2=4").unwrap();
        assert_eq!(l.xi(), 0.25);
        assert_eq!(l.xi_prime(), 3.0);
        let l = load_loss("interval:mu1=2,mu2=2").unwrap();
        assert!((l.evaluate(10.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(load_loss("interval:mu1=2").is_err());
        assert!(load_loss("/no/such/file.json").is_err());
    }

    #[test]
    fn loss_files_round_trip_exactly() {
        for loss in [
            Loss::mse(),
            Loss::mae(),
            Loss::generalized_interval(1.0, 2.0, 2.5, 3.5).unwrap(),
        ] {
            let schema = loss_to_schema(&loss).unwrap();
            let json = serde_json::to_string_pretty(&schema).unwrap();
            let parsed: LossFile = serde_json::from_str(&json).unwrap();
            let reloaded = loss_from_schema(&parsed).unwrap();
            // Identical evaluation on a 1000-point grid spanning 8 decades.
            for i in 0..1000 {
                let x = 10f64.powf(-4.0 + 8.0 * i as f64 / 999.0);
                let a = loss.evaluate(x).unwrap();
                let b = reloaded.evaluate(x).unwrap();
                assert!(
                    (a - b).abs() <= 1e-15 * (1.0 + a.abs()),
                    "{} at x={x}: {a} vs {b}",
                    loss.name()
                );
            }
            // Metadata survives too.
            assert_eq!(loss.k_zero(), reloaded.k_zero());
            assert_eq!(loss.k_inf(), reloaded.k_inf());
            assert_eq!(loss.xi(), reloaded.xi());
            assert_eq!(loss.xi_prime(), reloaded.xi_prime());
        }
    }

    #[test]
    fn infinity_bound_serializes_as_the_word_inf() {
        let schema = loss_to_schema(&Loss::mse()).unwrap();
        let json = serde_json::to_string(&schema).unwrap();
        assert!(json.contains("\"inf\""), "serialized: {json}");
        // And parses back.
        let parsed: LossFile = serde_json::from_str(&json).unwrap();
        assert!(parsed
            .segments
            .last()
            .unwrap()
            .hi
            .value()
            .unwrap()
            .is_infinite());
    }

    #[test]
    fn p_grid_parsing_sorts_and_validates() {
        assert_eq!(parse_p_grid("0.5,0.1,0.01").unwrap(), vec![0.5, 0.1, 0.01]);
        assert_eq!(parse_p_grid("0.01,0.5,0.1").unwrap(), vec![0.5, 0.1, 0.01]);
        let log = parse_p_grid("logspace:1e-4:0.5:20").unwrap();
        assert_eq!(log.len(), 20);
        assert!((log[0] - 0.5).abs() < 1e-15);
        assert!((log[19] - 1e-4).abs() < 1e-18);
        for w in log.windows(2) {
            assert!(w[0] > w[1]);
        }
        assert!(parse_p_grid("0.5,1.5").is_err());
        assert!(parse_p_grid("logspace:0:1:5").is_err());
        assert!(parse_p_grid("abc").is_err());
    }

    #[test]
    fn r_range_parsing() {
        assert_eq!(parse_r_range("3..10").unwrap(), (3, 10));
        assert_eq!(parse_r_range("2..2").unwrap(), (2, 2));
        assert!(parse_r_range("5..3").is_err());
        assert!(parse_r_range("0..4").is_err());
        assert!(parse_r_range("7").is_err());
    }

    #[test]
    fn estimator_argument_builds_reciprocal_family() {
        let arg = EstimatorArg {
            estimator: "omega/(n+c)".to_string(),
            omega: Some(2.0),
            c: -1,
            table: None,
        };
        match arg.build().unwrap() {
            EstimatorSpec::ShiftedReciprocal { omega, c } => {
                assert_eq!(omega, 2.0);
                assert_eq!(c, -1);
            }
            other => panic!("unexpected spec {other:?}"),
        }
        let missing = EstimatorArg {
            estimator: "omega/(n+c)".to_string(),
            omega: None,
            c: 1,
            table: None,
        };
        assert!(missing.build().is_err());
    }

    #[test]
    fn csv_rows_use_full_precision() {
        let row = csv_row(0.1, 1.0 / 3.0, "exact_truncation", 1e-12);
        assert_eq!(
            row,
            "1.0000000000000001e-1,3.3333333333333331e-1,exact_truncation,9.9999999999999998e-13"
        );
    }
}
