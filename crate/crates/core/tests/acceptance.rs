//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a failure status if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{
    corpus, doubled_shortest_path, feasible_by_cuts, infeasible_instance, perfect_maze,
    unique_shortest_path, Instance,
};
use physarum_core::dynamics::{
    convergence_rate_with, run, tail_fit, RateWindow, RunResult, RunStatus, SolverConfig,
};
use physarum_core::graph::{is_feasible, ArcSet, ArcVector};
use physarum_core::harmonic::{check_inf_harmonic, dual_convergence_gap, extension_for};
use physarum_core::oracle::{enumerate_bfs, solve_exact, OptimalSet};

const CORPUS_SIZE: u64 = 200;

struct Verdict {
    id: u8,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn verdict(id: u8, title: &'static str, passed: bool, detail: String) -> Verdict {
    Verdict {
        id,
        title,
        passed,
        detail,
    }
}

fn relative_gap(cost: f64, z: f64) -> f64 {
    (cost - z).abs() / z.abs().max(f64::MIN_POSITIVE)
}

fn corpus_config(t_max: f64) -> SolverConfig<f64> {
    SolverConfig {
        step: 0.05,
        t_max,
        record_states: true,
        ..SolverConfig::default()
    }
}

struct CorpusRun {
    instance: Instance,
    optimal: OptimalSet<f64>,
    /// Largest support among optimal basic solutions.
    widest_optimal_bfs: usize,
    first: RunResult<f64>,
    /// Rerun to the longer horizon when the first run did not converge.
    last: Option<RunResult<f64>>,
}

impl CorpusRun {
    fn result(&self) -> &RunResult<f64> {
        self.last.as_ref().unwrap_or(&self.first)
    }

    fn converged_within(&self, r: &RunResult<f64>) -> bool {
        r.status == RunStatus::Converged
            && relative_gap(
                self.instance.graph.cost(&r.solution.current),
                self.optimal.optimal_cost,
            ) <= 1e-6
    }

    fn non_unique(&self) -> bool {
        self.optimal.optimal_arcs.len() > self.widest_optimal_bfs
    }
}

fn criterion_1(instances: &[Instance]) -> (Verdict, Vec<(OptimalSet<f64>, usize)>) {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut out = Vec::new();
    for inst in instances {
        let optimal = solve_exact(&inst.graph, &inst.sources).expect("corpus is feasible");
        let bfs = enumerate_bfs(&inst.graph, &inst.sources).expect("small instances");
        let best = bfs.iter().map(|s| s.cost).fold(f64::INFINITY, f64::min);
        if optimal.optimal_cost != best {
            mismatches.push((inst.seed, optimal.optimal_cost, best));
        }
        let widest = bfs
            .iter()
            .filter(|s| s.cost == best)
            .map(|s| s.support.len())
            .max()
            .unwrap_or(0);
        out.push((optimal, widest));
    }
    let elapsed = start.elapsed();
    let passed = mismatches.is_empty() && elapsed <= Duration::from_secs(60);
    (
        verdict(
            1,
            "oracle optimum equals minimum over basic feasible solutions",
            passed,
            format!(
                "{} instances, {} mismatches {:?}, {:.2?}",
                instances.len(),
                mismatches.len(),
                mismatches,
                elapsed
            ),
        ),
        out,
    )
}

fn criterion_2(runs: &[CorpusRun]) -> Verdict {
    let total = runs.len();
    let by_200 = runs.iter().filter(|r| r.converged_within(&r.first)).count();
    let late: Vec<&CorpusRun> = runs
        .iter()
        .filter(|r| !r.converged_within(&r.first))
        .collect();
    let late_ok = late
        .iter()
        .filter(|r| r.last.as_ref().is_some_and(|l| r.converged_within(l)))
        .count();
    let passed = by_200 * 100 >= 99 * total && late_ok == late.len();
    let late_seeds: Vec<u64> = late.iter().map(|r| r.instance.seed).collect();
    verdict(
        2,
        "primal convergence to an optimal flow",
        passed,
        format!(
            "{by_200}/{total} converged by t=200 with relative gap <= 1e-6; {late_ok}/{} of the rest by t=500 {late_seeds:?}",
            late.len()
        ),
    )
}

fn criterion_3(runs: &[CorpusRun]) -> Verdict {
    let total = runs.len();
    let mut matched = 0;
    let mut non_unique = 0;
    let mut non_unique_matched = 0;
    let mut failures = Vec::new();
    for r in runs {
        let res = r.result();
        let ok = res.support(1e-9) == r.optimal.optimal_arcs;
        matched += usize::from(ok);
        if r.non_unique() {
            non_unique += 1;
            non_unique_matched += usize::from(ok);
        }
        if !ok {
            failures.push(r.instance.seed);
        }
    }
    let passed = matched * 100 >= 99 * total && non_unique_matched >= 5;
    verdict(
        3,
        "thresholded support equals the optimal arc set",
        passed,
        format!(
            "{matched}/{total} matched; non-unique optima: {non_unique_matched}/{non_unique} matched; failures {failures:?}"
        ),
    )
}

fn criterion_4(runs: &[CorpusRun]) -> Verdict {
    let window = RateWindow {
        tail_fraction: 0.5,
        floor: 1e-11,
        min_samples: 10,
    };
    let mut fitted = 0;
    let mut stationary = 0;
    let mut failures = Vec::new();
    let mut worst_slope = f64::NEG_INFINITY;
    let mut worst_r2 = f64::INFINITY;
    for r in runs {
        let res = r.result();
        let errors: Vec<f64> = res
            .trace
            .iter()
            .map(|row| {
                row.current
                    .as_ref()
                    .expect("states recorded")
                    .dist_inf(&res.solution.current)
            })
            .collect();
        if errors.iter().all(|&e| e <= window.floor) {
            stationary += 1;
            continue;
        }
        match convergence_rate_with(&res.trace, &res.solution.current, &window) {
            Ok(fit) => {
                fitted += 1;
                worst_slope = worst_slope.max(fit.slope);
                worst_r2 = worst_r2.min(fit.r_squared);
                if !(fit.slope < -0.02 && fit.r_squared > 0.9) {
                    failures.push((r.instance.seed, fit.slope, fit.r_squared));
                }
            }
            Err(e) => {
                eprintln!("  seed {}: rate fit failed: {e}", r.instance.seed);
                failures.push((r.instance.seed, f64::NAN, f64::NAN));
            }
        }
    }
    verdict(
        4,
        "exponential convergence of the flow",
        failures.is_empty(),
        format!(
            "{fitted} fitted (max slope {worst_slope:.4}, min R^2 {worst_r2:.4}); {stationary} with flow error <= 1e-11 throughout; failures {failures:?}"
        ),
    )
}

fn criterion_5(runs: &[CorpusRun]) -> Verdict {
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut worst_psi = f64::NEG_INFINITY;
    let mut worst_kilter: f64 = 0.0;
    for r in runs {
        let res = r.result();
        if res.status != RunStatus::Converged {
            continue;
        }
        checked += 1;
        let support = res.support(1e-9);
        let psi = support
            .iter()
            .map(|&e| res.solution.field[e])
            .fold(f64::NEG_INFINITY, f64::max);
        let kilter = res.trace.last().unwrap().kilter_residual;
        worst_psi = worst_psi.max(psi);
        worst_kilter = worst_kilter.max(kilter);
        if psi > 1.0 + 1e-6 || kilter > 1e-8 {
            failures.push(r.instance.seed);
        }
    }
    verdict(
        5,
        "dual feasibility and kilter residual at convergence",
        failures.is_empty() && checked > 0,
        format!("{checked} converged runs; max psi {worst_psi:.10}, max kilter {worst_kilter:.3e}; failures {failures:?}"),
    )
}

fn criterion_6(runs: &[CorpusRun]) -> Verdict {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for r in runs {
        let g = &r.instance.graph;
        if !g.arcs_connected(&r.optimal.optimal_arcs) {
            continue;
        }
        checked += 1;
        let b = &r.instance.sources;
        let ext = extension_for(g, b).expect("connected optimal set");
        let cfg = SolverConfig {
            potential_tol: Some(1e-6),
            record_states: false,
            ..corpus_config(500.0)
        };
        let res = run(g, b, &ArcVector::filled(g.arc_count(), 1.0), &cfg).expect("corpus run");
        let gap = dual_convergence_gap(&res, &ext).expect("same node count");
        let violators =
            check_inf_harmonic(g, &ext.arcs, &ext.potential, &r.instance.sources.support())
                .violators;
        worst = worst.max(gap);
        if gap > 1e-4 || !violators.is_empty() {
            failures.push((r.instance.seed, gap, violators));
        }
    }
    verdict(
        6,
        "potentials converge to the infinity-harmonic extension",
        failures.is_empty() && checked > 0,
        format!(
            "{checked} instances with connected optimal set, run with potential drift <= 1e-6; max gap {worst:.3e}; failures {failures:?}"
        ),
    )
}

fn criterion_7() -> Verdict {
    let window = RateWindow {
        tail_fraction: 0.5,
        floor: 0.0,
        min_samples: 10,
    };
    let mut arcs_checked = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for seed in 0..20 {
        let inst = doubled_shortest_path(seed);
        let g = &inst.graph;
        let res = run(
            g,
            &inst.sources,
            &ArcVector::filled(g.arc_count(), 1.0),
            &corpus_config(500.0),
        )
        .unwrap();
        if res.status != RunStatus::Converged {
            failures.push((seed, usize::MAX, f64::NAN));
            continue;
        }
        for e in res.support(1e-9) {
            let a = g.arc(e);
            let back = g.find_arc(a.head, a.tail).expect("doubled arcs");
            let samples: Vec<(f64, f64)> = res
                .trace
                .iter()
                .map(|row| (row.t, row.sigma.as_ref().expect("states recorded")[back]))
                .collect();
            match tail_fit(&samples, &window) {
                Ok(fit) => {
                    arcs_checked += 1;
                    worst = worst.max(fit.slope);
                    if fit.slope > -0.5 {
                        failures.push((seed, back, fit.slope));
                    }
                }
                Err(_) => failures.push((seed, back, f64::NAN)),
            }
        }
    }
    verdict(
        7,
        "reverse-arc conductivities decay exponentially",
        failures.is_empty() && arcs_checked > 0,
        format!("20 instances, {arcs_checked} reverse arcs; max log slope {worst:.4}; failures {failures:?}"),
    )
}

fn criterion_8() -> Verdict {
    let mut exact = 0;
    let mut detected = 0;
    let mut details = Vec::new();
    for seed in 0..20 {
        let inst = infeasible_instance(seed);
        let (g, b) = (&inst.graph, &inst.sources);
        let reported = is_feasible(g, b);
        if !reported && !feasible_by_cuts(g, b) {
            exact += 1;
        }
        let cfg = SolverConfig {
            t_max: 50.0,
            ..SolverConfig::default()
        };
        match run(g, b, &ArcVector::filled(g.arc_count(), 1.0), &cfg) {
            Ok(res) if res.status == RunStatus::DivergenceDetected && res.state.t < 50.0 => {
                detected += 1
            }
            Ok(res) => details.push(format!(
                "seed {seed}: {:?} at t={}",
                res.status, res.state.t
            )),
            Err(e) => details.push(format!("seed {seed}: {e}")),
        }
    }
    verdict(
        8,
        "infeasibility is reported exactly and detected by divergence",
        exact == 20 && detected * 10 >= 9 * 20,
        format!("check exact on {exact}/20; divergence before t=50 on {detected}/20 {details:?}"),
    )
}

fn criterion_9() -> Verdict {
    let start = Instant::now();
    let maze = perfect_maze(15, 7);
    let inst = &maze.instance;
    let g = &inst.graph;
    let n = g.node_count();
    let path = unique_shortest_path(g, 0, n - 1);
    let res = run(
        g,
        &inst.sources,
        &ArcVector::filled(g.arc_count(), 1.0),
        &SolverConfig::default(),
    );
    let elapsed = start.elapsed();
    let (passed, detail) = match (path, res) {
        (Some(path), Ok(res)) => {
            let support: ArcSet = res.support(1e-9);
            let ok = res.status == RunStatus::Converged
                && support == path
                && elapsed <= Duration::from_secs(30);
            (
                ok,
                format!(
                    "{}x{} maze, {} arcs; path of {} arcs; status {:?} at t={:.2}; support {} arcs, equal={}; {:.2?}",
                    maze.side,
                    maze.side,
                    g.arc_count(),
                    path.len(),
                    res.status,
                    res.state.t,
                    support.len(),
                    support == path,
                    elapsed
                ),
            )
        }
        (None, _) => (false, "shortest path is not unique".into()),
        (_, Err(e)) => (false, format!("run failed: {e}")),
    };
    verdict(9, "maze support is the shortest path", passed, detail)
}

fn criterion_10(runs: &[CorpusRun]) -> Verdict {
    let mut rows = 0usize;
    let mut failures = BTreeSet::new();
    let mut worst_sigma = f64::NEG_INFINITY;
    let mut worst_phi = f64::NEG_INFINITY;
    for r in runs {
        let b_max = r.instance.sources.total_supply();
        let sigma0_max = 1.0;
        for res in std::iter::once(&r.first).chain(r.last.as_ref()) {
            for row in &res.trace {
                rows += 1;
                let sigma = row.sigma.as_ref().expect("states recorded").norm_inf();
                let phi = row.current.as_ref().expect("states recorded").norm_inf();
                worst_sigma = worst_sigma.max(sigma - (b_max + sigma0_max));
                worst_phi = worst_phi.max(phi - b_max);
                let slack = 1e-12 * b_max;
                if sigma > b_max + sigma0_max + slack || phi > b_max + slack {
                    failures.insert(r.instance.seed);
                }
            }
        }
    }
    verdict(
        10,
        "conductivity and flow bounds on every trace row",
        failures.is_empty() && rows > 0,
        format!(
            "{rows} rows; max sigma excess {worst_sigma:.3e}, max flow excess {worst_phi:.3e}; failing seeds {failures:?}"
        ),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let instances = corpus(CORPUS_SIZE);
    let (v1, oracle) = criterion_1(&instances);
    let mut verdicts = vec![v1];

    let runs: Vec<CorpusRun> = instances
        .into_iter()
        .zip(oracle)
        .map(|(instance, (optimal, widest_optimal_bfs))| {
            let (g, b) = (&instance.graph, &instance.sources);
            let sigma0 = ArcVector::filled(g.arc_count(), 1.0);
            let first = run(g, b, &sigma0, &corpus_config(200.0)).expect("corpus run");
            let mut cr = CorpusRun {
                instance,
                optimal,
                widest_optimal_bfs,
                first,
                last: None,
            };
            if !cr.converged_within(&cr.first) {
                let (g, b) = (&cr.instance.graph, &cr.instance.sources);
                cr.last = Some(run(g, b, &sigma0, &corpus_config(500.0)).expect("corpus rerun"));
            }
            cr
        })
        .collect();

    verdicts.push(criterion_2(&runs));
    verdicts.push(criterion_3(&runs));
    verdicts.push(criterion_4(&runs));
    verdicts.push(criterion_5(&runs));
    verdicts.push(criterion_6(&runs));
    verdicts.push(criterion_7());
    verdicts.push(criterion_8());
    verdicts.push(criterion_9());
    verdicts.push(criterion_10(&runs));

    println!();
    for v in &verdicts {
        let tag = if v.passed { "PASS" } else { "FAIL" };
        println!("acceptance {:>2} {tag}: {} :: {}", v.id, v.title, v.detail);
    }
    let failed = verdicts.iter().filter(|v| !v.passed).count();
    println!(
        "acceptance summary: {} passed, {failed} failed ({:.2?})",
        verdicts.len() - failed,
        started.elapsed()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
