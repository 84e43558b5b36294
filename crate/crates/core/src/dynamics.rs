//! Conductivity dynamics `dσ/dt = φ − σ`, equivalently `d log σ/dt = ψ − 1`.
//!
//! The default integrator steps the logarithmic form multiplicatively, so
//! conductivities stay positive and optimal fixpoints are reproduced exactly.
//! Every step solves Kirchhoff's equations at the current conductivities
//! and records kilter diagnostics at the pre-step state.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{is_feasible, ArcSet, ArcVector, Digraph, SourceVector};
use crate::kirchhoff::{solve_neumann_with, ElectricalSolution, KirchhoffOptions};
use crate::scalar::Scalar;

/// Largest per-step change of `log σ` accepted by the multiplicative update.
pub const EXPONENT_CLAMP: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// `σ ← σ exp(h(ψ − 1))`.
    LogEuler,
    /// `σ ← σ + h(φ − σ)`, floored at `τ_supp · min σ(0)`.
    Euler,
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log-euler" => Ok(Self::LogEuler),
            "euler" => Ok(Self::Euler),
            other => Err(Error::Domain(format!("unknown integrator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    pub step: T,
    pub integrator: Integrator,
    pub t_max: T,
    /// Kilter residual at which a run is declared converged.
    pub stop_tol: T,
    /// When set, Converged also requires the potential drift
    /// (see [`potential_drift`]) to be at most this value.
    pub potential_tol: Option<T>,
    /// `τ_supp`: arcs with `σ ≤ τ_supp · b*_max` count as unsupported.
    pub support_tol: T,
    /// `‖p‖_∞` above which the run is declared divergent; `None` selects
    /// `10³ · Σℓ · ‖b‖₁ / min σ(0)`.
    pub divergence_potential_cap: Option<T>,
    /// Reject infeasible problems before integrating.
    pub strict: bool,
    /// Conductivities at or below this value are left out of the Laplacian.
    pub assembly_threshold: T,
    /// Keep `σ` and `φ` snapshots in every trace record.
    pub record_states: bool,
    /// Keep the running time average of the field in every trace record.
    pub track_mean_field: bool,
    /// Record every k-th step (the first and last steps are always kept).
    pub record_every: usize,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            step: T::lit(0.05),
            integrator: Integrator::LogEuler,
            t_max: T::lit(200.0),
            stop_tol: T::lit(1e-8),
            potential_tol: None,
            support_tol: T::lit(1e-9),
            divergence_potential_cap: None,
            strict: false,
            assembly_threshold: T::zero(),
            record_states: false,
            track_mean_field: false,
            record_every: 1,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    fn validate(&self) -> Result<()> {
        if !(self.step > T::zero()) {
            return Err(Error::Domain(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if !(self.stop_tol > T::zero()) {
            return Err(Error::Domain(format!(
                "stop_tol must be positive, got {}",
                self.stop_tol
            )));
        }
        if let Some(tol) = self.potential_tol {
            if !(tol > T::zero()) {
                return Err(Error::Domain(format!(
                    "potential_tol must be positive, got {tol}"
                )));
            }
        }
        if !(self.t_max >= T::zero()) {
            return Err(Error::Domain(format!(
                "t_max must be nonnegative, got {}",
                self.t_max
            )));
        }
        if self.support_tol < T::zero() {
            return Err(Error::Domain("support_tol must be nonnegative".into()));
        }
        Ok(())
    }

    fn kirchhoff(&self) -> KirchhoffOptions<T> {
        KirchhoffOptions {
            support_threshold: self.assembly_threshold,
            ..KirchhoffOptions::default()
        }
    }

    /// The divergence cap in effect for a given problem and start.
    pub fn potential_cap(&self, g: &Digraph<T>, b: &SourceVector<T>, sigma0: &ArcVector<T>) -> T {
        self.divergence_potential_cap.unwrap_or_else(|| {
            let min0 = sigma0.iter().fold(T::infinity(), |m, &s| m.min(s));
            T::lit(1e3) * g.total_length() * b.norm_one() / min0
        })
    }
}

/// Conductivities at dynamics time `t`, with the initial condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConductivityState<T> {
    pub t: T,
    pub sigma: ArcVector<T>,
    pub sigma0: ArcVector<T>,
}

impl<T: Scalar> ConductivityState<T> {
    pub fn new(sigma0: ArcVector<T>) -> Result<Self> {
        if let Some(e) = sigma0
            .iter()
            .position(|s| !(*s > T::zero()) || !s.is_finite())
        {
            return Err(Error::Domain(format!(
                "initial conductivity of arc {e} is {} (must be positive)",
                sigma0[e]
            )));
        }
        Ok(Self {
            t: T::zero(),
            sigma: sigma0.clone(),
            sigma0,
        })
    }

    /// `ξ = log(σ(t)/σ(0))`.
    pub fn log_ratio(&self) -> ArcVector<T> {
        self.sigma
            .iter()
            .zip(self.sigma0.iter())
            .map(|(&s, &s0)| (s / s0).ln())
            .collect()
    }
}

/// Diagnostics of one step, evaluated at the pre-step conductivities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord<T> {
    pub t: T,
    pub kilter_residual: T,
    /// `max (ψ − 1)⁺` over supported arcs.
    pub max_psi_violation: T,
    /// `‖φ − σ‖_∞`.
    pub flow_gap: T,
    /// `ℓᵀσ`.
    pub cost: T,
    /// `‖p‖_∞`.
    pub potential_norm: T,
    /// Time average of `ψ` over `[0, t)`.
    pub mean_field: Option<ArcVector<T>>,
    pub sigma: Option<ArcVector<T>>,
    pub current: Option<ArcVector<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    MaxTime,
    DivergenceDetected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult<T> {
    pub state: ConductivityState<T>,
    /// Kirchhoff solution at the final conductivities.
    pub solution: ElectricalSolution<T>,
    pub trace: Vec<TraceRecord<T>>,
    pub status: RunStatus,
    /// `b*_max`, as used for the support threshold.
    pub b_star_max: T,
}

impl<T: Scalar> RunResult<T> {
    /// Arcs with `σ > τ_supp · b*_max`.
    pub fn support(&self, support_tol: T) -> ArcSet {
        self.state
            .sigma
            .support_above(support_tol * self.b_star_max)
    }
}

/// Components of the kilter residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kilter<T> {
    pub residual: T,
    pub max_psi_violation: T,
    pub flow_gap: T,
}

/// Distance of `(σ, φ, ψ)` from the in-kilter line.
///
/// `max((ψ − 1)⁺ on arcs with σ > tau·b*_max, ‖φ − σ‖_∞ / max(1, b*_max))`.
pub fn kilter_residual<T: Scalar>(
    sol: &ElectricalSolution<T>,
    sigma: &ArcVector<T>,
    b_star_max: T,
    tau: T,
) -> T {
    kilter(sol, sigma, b_star_max, tau).residual
}

pub fn kilter<T: Scalar>(
    sol: &ElectricalSolution<T>,
    sigma: &ArcVector<T>,
    b_star_max: T,
    tau: T,
) -> Kilter<T> {
    let threshold = tau * b_star_max;
    let max_psi_violation = sigma
        .iter()
        .zip(sol.field.iter())
        .filter(|(&s, _)| s > threshold)
        .fold(T::zero(), |m, (_, &psi)| m.max(psi - T::one()));
    let flow_gap = sol.current.dist_inf(sigma);
    Kilter {
        residual: max_psi_violation.max(flow_gap / b_star_max.max(T::one())),
        max_psi_violation,
        flow_gap,
    }
}

/// Every arc is either unsupported or has `|ψ − 1| ≤ 10·stop_tol`, and no
/// arc has `ψ > 1 + 10·stop_tol`.
fn at_fixpoint<T: Scalar>(
    sol: &ElectricalSolution<T>,
    sigma: &ArcVector<T>,
    threshold: T,
    stop_tol: T,
) -> bool {
    let slack = T::lit(10.0) * stop_tol;
    sigma.iter().zip(sol.field.iter()).all(|(&s, &psi)| {
        psi <= T::one() + slack && (s <= threshold || (psi - T::one()).abs() <= slack)
    })
}

/// Spread `max dp/dt − min dp/dt` of the potential derivative under
/// `dσ/dt = φ − σ`, taken per component, which does not depend on the gauge.
///
/// Differentiating `L(σ)p = b` gives `L(σ) dp/dt = −B((φ − σ) ∘ ψ)`, which
/// is solved with the same conductivities.
pub fn potential_drift<T: Scalar>(
    g: &Digraph<T>,
    sigma: &ArcVector<T>,
    sol: &ElectricalSolution<T>,
) -> Result<T> {
    potential_drift_with(
        g,
        sigma,
        sol,
        &KirchhoffOptions {
            support_threshold: T::zero(),
            ..KirchhoffOptions::default()
        },
    )
}

fn potential_drift_with<T: Scalar>(
    g: &Digraph<T>,
    sigma: &ArcVector<T>,
    sol: &ElectricalSolution<T>,
    opts: &KirchhoffOptions<T>,
) -> Result<T> {
    let mut rhs = vec![T::zero(); g.node_count()];
    for (e, a) in g.arcs().iter().enumerate() {
        let x = (sol.current[e] - sigma[e]) * sol.field[e];
        rhs[a.tail] = rhs[a.tail] - x;
        rhs[a.head] = rhs[a.head] + x;
    }
    let rhs = SourceVector::balanced_unchecked(rhs);
    if rhs.is_zero() {
        return Ok(T::zero());
    }
    Ok(solve_neumann_with(g, sigma, &rhs, opts)?.potential_norm())
}

struct Problem<'a, T> {
    g: &'a Digraph<T>,
    b: &'a SourceVector<T>,
    cfg: &'a SolverConfig<T>,
    kirchhoff: KirchhoffOptions<T>,
    b_star_max: T,
}

impl<T: Scalar> Problem<'_, T> {
    fn observe(
        &self,
        state: &ConductivityState<T>,
    ) -> Result<(ElectricalSolution<T>, TraceRecord<T>)> {
        let sol = solve_neumann_with(self.g, &state.sigma, self.b, &self.kirchhoff)?;
        if sol.field.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field at t = {}", state.t)));
        }
        let k = kilter(&sol, &state.sigma, self.b_star_max, self.cfg.support_tol);
        let record = TraceRecord {
            t: state.t,
            kilter_residual: k.residual,
            max_psi_violation: k.max_psi_violation,
            flow_gap: k.flow_gap,
            cost: self.g.cost(&state.sigma),
            potential_norm: sol.potential_norm(),
            mean_field: None,
            sigma: self.cfg.record_states.then(|| state.sigma.clone()),
            current: self.cfg.record_states.then(|| sol.current.clone()),
        };
        Ok((sol, record))
    }

    fn advance(
        &self,
        state: &ConductivityState<T>,
        sol: &ElectricalSolution<T>,
    ) -> ConductivityState<T> {
        let h = self.cfg.step;
        let sigma = match self.cfg.integrator {
            Integrator::LogEuler => {
                let clamp = T::lit(EXPONENT_CLAMP);
                state
                    .sigma
                    .iter()
                    .zip(sol.field.iter())
                    .map(|(&s, &psi)| {
                        let x = (h * (psi - T::one())).max(-clamp).min(clamp);
                        (s * x.exp()).max(T::min_positive_value())
                    })
                    .collect()
            }
            Integrator::Euler => {
                let min0 = state.sigma0.iter().fold(T::infinity(), |m, &s| m.min(s));
                let floor = (self.cfg.support_tol * min0).max(T::min_positive_value());
                state
                    .sigma
                    .iter()
                    .zip(sol.current.iter())
                    .map(|(&s, &phi)| (s + h * (phi - s)).max(floor))
                    .collect()
            }
        };
        ConductivityState {
            t: state.t + h,
            sigma,
            sigma0: state.sigma0.clone(),
        }
    }
}

/// One integrator step from `state`; the record describes the pre-step state.
pub fn step<T: Scalar>(
    g: &Digraph<T>,
    b: &SourceVector<T>,
    state: &ConductivityState<T>,
    cfg: &SolverConfig<T>,
) -> Result<(ConductivityState<T>, TraceRecord<T>)> {
    cfg.validate()?;
    state.sigma.check_len(g.arc_count())?;
    let problem = Problem {
        g,
        b,
        cfg,
        kirchhoff: cfg.kirchhoff(),
        b_star_max: b.total_supply(),
    };
    let (sol, record) = problem.observe(state)?;
    Ok((problem.advance(state, &sol), record))
}

/// Integrates from `sigma0` until convergence, divergence or `t_max`.
///
/// Converged means kilter residual `≤ stop_tol` with every supported arc on
/// the fixpoint line (`|ψ − 1| ≤ 10·stop_tol`) and `ψ ≤ 1 + 10·stop_tol`
/// everywhere. With `potential_tol` set, the potential drift must also be
/// below it.
pub fn run<T: Scalar>(
    g: &Digraph<T>,
    b: &SourceVector<T>,
    sigma0: &ArcVector<T>,
    cfg: &SolverConfig<T>,
) -> Result<RunResult<T>> {
    cfg.validate()?;
    sigma0.check_len(g.arc_count())?;
    if b.len() != g.node_count() {
        return Err(Error::Dimension {
            expected: g.node_count(),
            found: b.len(),
        });
    }
    if cfg.strict && !is_feasible(g, b) {
        return Err(Error::Infeasible);
    }
    let problem = Problem {
        g,
        b,
        cfg,
        kirchhoff: cfg.kirchhoff(),
        b_star_max: b.total_supply(),
    };
    let cap = cfg.potential_cap(g, b, sigma0);
    let threshold = cfg.support_tol * problem.b_star_max;
    let every = cfg.record_every.max(1);
    let t_end = cfg.t_max - cfg.step * T::lit(1e-6);

    let mut state = ConductivityState::new(sigma0.clone())?;
    let mut field_integral: ArcVector<T> = ArcVector::zeros(g.arc_count());
    let mut trace = Vec::new();
    let mut k = 0usize;
    loop {
        let (sol, mut record) = problem.observe(&state)?;
        if cfg.track_mean_field {
            record.mean_field = Some(if k == 0 {
                sol.field.clone()
            } else {
                field_integral.iter().map(|&x| x / state.t).collect()
            });
            for (acc, &psi) in field_integral.iter_mut().zip(sol.field.iter()) {
                *acc = *acc + cfg.step * psi;
            }
        }
        let status = if record.potential_norm > cap {
            log::debug!(
                "potential norm {} exceeds cap {} at t = {}",
                record.potential_norm,
                cap,
                state.t
            );
            Some(RunStatus::DivergenceDetected)
        } else if record.kilter_residual <= cfg.stop_tol
            && at_fixpoint(&sol, &state.sigma, threshold, cfg.stop_tol)
            && match cfg.potential_tol {
                Some(tol) => {
                    potential_drift_with(g, &state.sigma, &sol, &problem.kirchhoff)? <= tol
                }
                None => true,
            }
        {
            Some(RunStatus::Converged)
        } else if state.t >= t_end {
            Some(RunStatus::MaxTime)
        } else {
            None
        };
        if let Some(status) = status {
            trace.push(record);
            log::info!("run finished at t = {} with status {:?}", state.t, status);
            return Ok(RunResult {
                state,
                solution: sol,
                trace,
                status,
                b_star_max: problem.b_star_max,
            });
        }
        if k.is_multiple_of(every) {
            trace.push(record);
        }
        state = problem.advance(&state, &sol);
        k += 1;
    }
}

/// Least-squares line through `(t, ln error)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
    pub samples: usize,
}

/// Which samples enter a rate fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateWindow<T> {
    /// Fraction of the admissible samples, counted from the end, that is fitted.
    pub tail_fraction: T,
    /// Samples with error at or below this are not admissible.
    pub floor: T,
    pub min_samples: usize,
}

impl<T: Scalar> Default for RateWindow<T> {
    fn default() -> Self {
        Self {
            tail_fraction: T::lit(0.5),
            floor: T::lit(1e-12),
            min_samples: 10,
        }
    }
}

/// Fits `ln y = slope · t + c`. Points with `y ≤ 0` are rejected by the caller.
pub fn log_linear_fit<T: Scalar>(points: &[(T, T)]) -> Result<RateFit<T>> {
    if points.len() < 2 {
        return Err(Error::Diagnostics(format!(
            "{} samples are too few for a fit",
            points.len()
        )));
    }
    let n = T::from_count(points.len());
    let (st, sy) = points
        .iter()
        .fold((T::zero(), T::zero()), |(a, b), &(t, y)| {
            (a + t, b + y.ln())
        });
    let (mt, my) = (st / n, sy / n);
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for &(t, y) in points {
        let (dx, dy) = (t - mt, y.ln() - my);
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    if sxx.is_zero() {
        return Err(Error::Diagnostics("all samples share one time".into()));
    }
    let slope = sxy / sxx;
    let ss_res = (syy - slope * sxy).max(T::zero());
    let r_squared = if syy > T::zero() {
        T::one() - ss_res / syy
    } else {
        T::one()
    };
    Ok(RateFit {
        slope,
        intercept: my - slope * mt,
        r_squared,
        samples: points.len(),
    })
}

/// Tail fit of `ln ‖φ(t) − reference‖_∞` with the default window.
pub fn convergence_rate<T: Scalar>(
    trace: &[TraceRecord<T>],
    reference_flow: &ArcVector<T>,
) -> Result<RateFit<T>> {
    convergence_rate_with(trace, reference_flow, &RateWindow::default())
}

pub fn convergence_rate_with<T: Scalar>(
    trace: &[TraceRecord<T>],
    reference_flow: &ArcVector<T>,
    window: &RateWindow<T>,
) -> Result<RateFit<T>> {
    let mut errors = Vec::with_capacity(trace.len());
    for rec in trace {
        let phi = rec
            .current
            .as_ref()
            .ok_or_else(|| Error::Diagnostics("trace was recorded without currents".into()))?;
        errors.push((rec.t, phi.dist_inf(reference_flow)));
    }
    tail_fit(&errors, window)
}

/// Fits the trailing `tail_fraction` of the samples whose value exceeds the floor.
pub fn tail_fit<T: Scalar>(samples: &[(T, T)], window: &RateWindow<T>) -> Result<RateFit<T>> {
    let admissible: Vec<(T, T)> = samples
        .iter()
        .copied()
        .filter(|&(_, y)| y > window.floor)
        .collect();
    let keep = (T::from_count(admissible.len()) * window.tail_fraction)
        .ceil()
        .to_usize()
        .unwrap_or(0)
        .min(admissible.len());
    if keep < window.min_samples {
        return Err(Error::Diagnostics(format!(
            "{keep} admissible tail samples, need {}",
            window.min_samples
        )));
    }
    log_linear_fit(&admissible[admissible.len() - keep..])
}

/// `σ(0)e^{−t} + ∫₀ᵗ e^{s−t} φ(s) ds` at every record, by trapezoidal
/// quadrature of the recorded currents. For the exact dynamics this equals
/// `σ(t)`; the discounted average flow is `(value − e^{−t}σ(0)) / (1 − e^{−t})`.
pub fn integrated_form<T: Scalar>(
    trace: &[TraceRecord<T>],
    sigma0: &ArcVector<T>,
) -> Result<Vec<ArcVector<T>>> {
    let mut out = Vec::with_capacity(trace.len());
    // ∫₀^{t_k} e^{s} φ(s) ds accumulated without the e^{−t} factor would
    // overflow for long runs, so the integral is carried already discounted.
    let mut acc: ArcVector<T> = ArcVector::zeros(sigma0.len());
    let half = T::lit(0.5);
    let mut prev: Option<(T, &ArcVector<T>)> = None;
    for rec in trace {
        let phi = rec
            .current
            .as_ref()
            .ok_or_else(|| Error::Diagnostics("trace was recorded without currents".into()))?;
        if let Some((t0, phi0)) = prev {
            let dt = rec.t - t0;
            let decay = (-dt).exp();
            for e in 0..acc.len() {
                acc[e] = acc[e] * decay + half * dt * (phi0[e] * decay + phi[e]);
            }
        }
        let damp = (-rec.t).exp();
        out.push(
            acc.iter()
                .zip(sigma0.iter())
                .map(|(&a, &s0)| a + damp * s0)
                .collect(),
        );
        prev = Some((rec.t, phi));
    }
    Ok(out)
}

/// Discounted time-averaged flow `φ̃(t)` at each record with `t > 0`.
pub fn discounted_average_flow<T: Scalar>(
    trace: &[TraceRecord<T>],
    sigma0: &ArcVector<T>,
) -> Result<Vec<(T, ArcVector<T>)>> {
    let integrated = integrated_form(trace, sigma0)?;
    Ok(trace
        .iter()
        .zip(integrated)
        .filter(|(rec, _)| rec.t > T::zero())
        .map(|(rec, value)| {
            let damp = (-rec.t).exp();
            let avg = value
                .iter()
                .zip(sigma0.iter())
                .map(|(&v, &s0)| (v - damp * s0) / (T::one() - damp))
                .collect();
            (rec.t, avg)
        })
        .collect())
}
