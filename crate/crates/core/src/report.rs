//! Run orchestration and reporting: solve an instance with the dynamics,
//! compare against the exact oracle and the dual extension, and emit
//! key=value reports and trace CSV.

use std::fmt::{self, Write as _};
use std::io;

use serde::Serialize;

use crate::dynamics::{convergence_rate, run, RunResult, RunStatus, SolverConfig, TraceRecord};
use crate::error::{Error, Result};
use crate::graph::{is_feasible, ArcSet, ArcVector, Digraph, SourceVector};
use crate::harmonic::{build_extension, check_inf_harmonic, dual_convergence_gap};
use crate::oracle::{dual_on_optimal_set, solve_exact};
use crate::scalar::Scalar;

pub const COST_GAP_TOL: f64 = 1e-6;
pub const PSI_TOL: f64 = 1e-6;
pub const DUAL_GAP_TOL: f64 = 1e-4;

pub const TRACE_HEADER: &str = "t,kilter_residual,max_psi_violation,flow_gap,cost,potential_norm";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Converged,
    MaxTime,
    DivergenceDetected,
    Infeasible,
}

impl From<RunStatus> for Outcome {
    fn from(s: RunStatus) -> Self {
        match s {
            RunStatus::Converged => Self::Converged,
            RunStatus::MaxTime => Self::MaxTime,
            RunStatus::DivergenceDetected => Self::DivergenceDetected,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub name: Option<String>,
    pub status: Outcome,
    pub reason: Option<String>,
    pub time: f64,
    pub cost: Option<f64>,
    pub optimal_cost: Option<f64>,
    pub relative_gap: Option<f64>,
    pub kilter_residual: Option<f64>,
    pub max_psi: Option<f64>,
    /// Arcs with `σ > τ_supp · b*_max`.
    pub support: ArcSet,
    pub optimal_arcs: Option<ArcSet>,
    pub support_match: bool,
    pub optimal_set_connected: Option<bool>,
    pub dual_gap: Option<f64>,
    pub harmonic_violators: Option<Vec<usize>>,
    pub rate_slope: Option<f64>,
    pub rate_r_squared: Option<f64>,
    pub checks: Vec<CheckResult>,
}

impl RunReport {
    fn infeasible(name: Option<String>) -> Self {
        Self {
            name,
            status: Outcome::Infeasible,
            reason: Some("infeasible".into()),
            time: 0.0,
            cost: None,
            optimal_cost: None,
            relative_gap: None,
            kilter_residual: None,
            max_psi: None,
            support: ArcSet::new(),
            optimal_arcs: None,
            support_match: false,
            optimal_set_connected: None,
            dual_gap: None,
            harmonic_violators: None,
            rate_slope: None,
            rate_r_squared: None,
            checks: Vec::new(),
        }
    }

    /// 0 converged with matching support, 1 otherwise unfinished,
    /// 2 infeasible or divergent.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Outcome::Converged if self.support_match => 0,
            Outcome::Converged | Outcome::MaxTime => 1,
            Outcome::DivergenceDetected | Outcome::Infeasible => 2,
        }
    }

    pub fn all_checks_passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    /// Line-oriented `key=value` text; absent values are omitted.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let mut put = |key: &str, value: &dyn fmt::Display| {
            writeln!(out, "{key}={value}").unwrap();
        };
        if let Some(name) = &self.name {
            put("name", name);
        }
        put("status", &self.status);
        if let Some(reason) = &self.reason {
            put("reason", reason);
        }
        put("time", &self.time);
        let optional = [
            ("cost", self.cost),
            ("optimal_cost", self.optimal_cost),
            ("relative_gap", self.relative_gap),
            ("kilter_residual", self.kilter_residual),
            ("max_psi", self.max_psi),
        ];
        for (key, value) in optional {
            if let Some(v) = value {
                put(key, &v);
            }
        }
        put("support", &join(&self.support));
        if let Some(h) = &self.optimal_arcs {
            put("optimal_arcs", &join(h));
        }
        put("support_match", &self.support_match);
        if let Some(c) = self.optimal_set_connected {
            put("optimal_set_connected", &c);
        }
        if let Some(gap) = self.dual_gap {
            put("dual_gap", &gap);
        }
        if let Some(v) = &self.harmonic_violators {
            put("harmonic_violators", &join(v));
        }
        if let (Some(slope), Some(r2)) = (self.rate_slope, self.rate_r_squared) {
            put("rate_slope", &slope);
            put("rate_r_squared", &r2);
        }
        for check in &self.checks {
            let verdict = if check.passed { "pass" } else { "FAIL" };
            put(
                &format!("check.{}", check.name),
                &format_args!("{verdict} {}", check.detail),
            );
        }
        out
    }
}

fn join<'a>(items: impl IntoIterator<Item = &'a usize>) -> String {
    items
        .into_iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// What [`solve_instance`] should compute beyond the dynamics run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Analysis {
    /// Oracle cost, `Ĥ` and support match.
    pub oracle: bool,
    /// Dual extension and dual gap when `Ĥ` is connected.
    pub dual: bool,
    /// Tail convergence-rate fit (requires state snapshots in the trace).
    pub rate: bool,
    /// Pass/fail checks of the comparison harness.
    pub checks: bool,
}

impl Analysis {
    pub fn full() -> Self {
        Self {
            oracle: true,
            dual: true,
            rate: true,
            checks: true,
        }
    }
}

pub struct Solved<T> {
    pub report: RunReport,
    pub run: Option<RunResult<T>>,
}

/// Runs the dynamics on a feasible instance and evaluates the outcome.
/// Infeasible instances are reported without running.
pub fn solve_instance<T: Scalar>(
    g: &Digraph<T>,
    b: &SourceVector<T>,
    sigma0: &ArcVector<T>,
    cfg: &SolverConfig<T>,
    analysis: Analysis,
    name: Option<String>,
) -> Result<Solved<T>> {
    if !is_feasible(g, b) {
        return Ok(Solved {
            report: RunReport::infeasible(name),
            run: None,
        });
    }
    let mut cfg = cfg.clone();
    cfg.record_states |= analysis.rate;
    let result = run(g, b, sigma0, &cfg)?;
    let report = evaluate(g, b, &result, &cfg, analysis, name)?;
    Ok(Solved {
        report,
        run: Some(result),
    })
}

/// Builds the report for a finished run.
pub fn evaluate<T: Scalar>(
    g: &Digraph<T>,
    b: &SourceVector<T>,
    result: &RunResult<T>,
    cfg: &SolverConfig<T>,
    analysis: Analysis,
    name: Option<String>,
) -> Result<RunReport> {
    let last = result
        .trace
        .last()
        .ok_or_else(|| Error::Internal("run produced an empty trace".into()))?;
    let support = result.support(cfg.support_tol);
    let cost = g.cost(&result.solution.current).as_f64();
    let max_psi = result
        .solution
        .field
        .iter()
        .fold(f64::NEG_INFINITY, |m, &x| m.max(x.as_f64()));
    let mut report = RunReport {
        name,
        status: result.status.into(),
        reason: match result.status {
            RunStatus::DivergenceDetected => Some("divergence".into()),
            RunStatus::MaxTime => Some("max-time".into()),
            RunStatus::Converged => None,
        },
        time: last.t.as_f64(),
        cost: Some(cost),
        kilter_residual: Some(last.kilter_residual.as_f64()),
        max_psi: Some(max_psi),
        support,
        ..RunReport::infeasible(None)
    };

    if analysis.rate && result.trace.iter().all(|r| r.current.is_some()) {
        if let Ok(fit) = convergence_rate(&result.trace, &result.solution.current) {
            report.rate_slope = Some(fit.slope.as_f64());
            report.rate_r_squared = Some(fit.r_squared.as_f64());
        }
    }

    if analysis.oracle || analysis.dual || analysis.checks {
        let optimal = solve_exact(g, b)?;
        let z = optimal.optimal_cost.as_f64();
        report.optimal_cost = Some(z);
        report.relative_gap = Some(relative_gap(cost, z));
        report.support_match = report.support == optimal.optimal_arcs;
        let connected = g.arcs_connected(&optimal.optimal_arcs);
        report.optimal_set_connected = Some(connected);
        if (analysis.dual || analysis.checks) && connected {
            let dual = dual_on_optimal_set(g, &optimal)?;
            let ext = build_extension(g, &optimal.optimal_arcs, &dual.potential)?;
            report.dual_gap = Some(dual_convergence_gap(result, &ext)?.as_f64());
            report.harmonic_violators =
                Some(check_inf_harmonic(g, &ext.arcs, &ext.potential, &b.support()).violators);
        }
        report.optimal_arcs = Some(optimal.optimal_arcs);
    }

    if analysis.checks {
        report.checks = comparison_checks(&report);
    }
    Ok(report)
}

/// `|c − z| / |z|`, or `|c|` when `z = 0`.
pub fn relative_gap(cost: f64, optimum: f64) -> f64 {
    if optimum == 0.0 {
        cost.abs()
    } else {
        (cost - optimum).abs() / optimum.abs()
    }
}

fn comparison_checks(r: &RunReport) -> Vec<CheckResult> {
    let mut checks = vec![CheckResult {
        name: "converged",
        passed: r.status == Outcome::Converged,
        detail: format!("status={}", r.status),
    }];
    if let Some(gap) = r.relative_gap {
        checks.push(CheckResult {
            name: "cost_gap",
            passed: gap <= COST_GAP_TOL,
            detail: format!("{gap:e}"),
        });
    }
    checks.push(CheckResult {
        name: "support_match",
        passed: r.support_match,
        detail: format!(
            "support={{{}}} optimal={{{}}}",
            join(&r.support),
            r.optimal_arcs.as_ref().map(join).unwrap_or_default()
        ),
    });
    if let Some(psi) = r.max_psi {
        checks.push(CheckResult {
            name: "dual_feasible",
            passed: psi <= 1.0 + PSI_TOL,
            detail: format!("max_psi={psi}"),
        });
    }
    if let Some(gap) = r.dual_gap {
        checks.push(CheckResult {
            name: "dual_gap",
            passed: gap <= DUAL_GAP_TOL,
            detail: format!("{gap:e}"),
        });
    }
    if let Some(v) = &r.harmonic_violators {
        checks.push(CheckResult {
            name: "inf_harmonic",
            passed: v.is_empty(),
            detail: format!("violators={{{}}}", join(v)),
        });
    }
    checks
}

/// Writes the trace as CSV with header [`TRACE_HEADER`].
pub fn write_trace_csv<T: Scalar, W: io::Write>(
    mut w: W,
    trace: &[TraceRecord<T>],
) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in trace {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.t, r.kilter_residual, r.max_psi_violation, r.flow_gap, r.cost, r.potential_norm
        )?;
    }
    w.flush()
}
