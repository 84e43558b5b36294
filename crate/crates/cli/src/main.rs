use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use physarum_core::dynamics::{Integrator, SolverConfig};
use physarum_core::graph::{cut_bounds, is_feasible, ArcVector};
use physarum_core::harmonic::{check_inf_harmonic, extension_for};
use physarum_core::instance::{
    parse_instance, random_instance, serialize_as, Format, GeneratorSpec,
};
use physarum_core::oracle::{dual_on_optimal_set, solve_exact};
use physarum_core::report::{solve_instance, write_trace_csv, Analysis, RunReport};
use physarum_core::{Error, InstanceFile64};

const EXIT_COMPARE_FAILED: u8 = 3;
const EXIT_ERROR: u8 = 4;

#[derive(Parser)]
#[command(
    name = "physarum",
    version,
    about = "Physarum dynamics for uncapacitated min-cost flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the dynamics on one instance and report the outcome.
    Solve {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write the run trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Exact optimum, optimal arc set and canonical dual.
    Oracle {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        json: bool,
    },
    /// Run dynamics and oracle and check that they agree.
    Compare {
        /// One or more instance files.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_parser = parse_format)]
        format: Option<Format>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Worker threads for multiple files.
        #[arg(long, visible_alias = "batch", default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        json: bool,
    },
    /// ∞-harmonic extension of the optimal dual.
    Dual {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        json: bool,
    },
    /// Generate a seeded random feasible instance.
    Random {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long, default_value_t = 6)]
        nodes: usize,
        #[arg(short, long, default_value_t = 10)]
        arcs: usize,
        #[arg(long, default_value_t = 10)]
        lmax: u32,
        #[arg(long, default_value_t = 3)]
        bmax: u32,
        #[arg(long, value_parser = parse_format, default_value = "native")]
        format: Format,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Combinatorial feasibility test (exit 0 feasible, 2 infeasible).
    Check {
        #[command(flatten)]
        input: Input,
    },
}

#[derive(Args)]
struct Input {
    file: PathBuf,
    /// Instance format; guessed from content when omitted.
    #[arg(long, value_parser = parse_format)]
    format: Option<Format>,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long, default_value_t = 200.0)]
    t_max: f64,
    #[arg(long, default_value_t = 1e-8)]
    stop_tol: f64,
    /// Also wait until the potentials stop moving by more than this rate.
    #[arg(long)]
    potential_tol: Option<f64>,
    #[arg(long, default_value = "log-euler")]
    integrator: Integrator,
    /// File with one positive initial conductivity per arc.
    #[arg(long)]
    sigma0: Option<PathBuf>,
    /// Seed for a random initial conductivity in [0.5, 2) per arc.
    #[arg(long, conflicts_with = "sigma0")]
    seed: Option<u64>,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig<f64> {
        SolverConfig {
            step: self.step,
            t_max: self.t_max,
            stop_tol: self.stop_tol,
            potential_tol: self.potential_tol,
            integrator: self.integrator,
            ..SolverConfig::default()
        }
    }

    fn sigma0(&self, m: usize) -> Result<ArcVector<f64>, Failure> {
        if let Some(path) = &self.sigma0 {
            return read_sigma0(path, m);
        }
        Ok(match self.seed {
            Some(seed) => (0..m)
                .map(|e| 0.5 + 1.5 * unit_hash(seed, e as u64))
                .collect(),
            None => ArcVector::filled(m, 1.0),
        })
    }
}

/// Deterministic value in [0, 1) from (seed, index).
fn unit_hash(seed: u64, index: u64) -> f64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug)]
enum Failure {
    Io(PathBuf, io::Error),
    Solver(Error),
    Json(serde_json::Error),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Io(path, e) => write!(f, "{}: {e}", path.display()),
            Failure::Solver(e) => write!(f, "{e}"),
            Failure::Json(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Json(e)
    }
}

fn load(path: &Path, format: Option<Format>) -> Result<InstanceFile64, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Io(path.to_owned(), e))?;
    let format = format.unwrap_or_else(|| Format::sniff(&bytes));
    let file = parse_instance(&bytes, format).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })?;
    for w in &file.warnings {
        log::warn!("{}: {w}", path.display());
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    Ok(match name {
        Some(name) => file.with_name(name),
        None => file,
    })
}

fn read_sigma0(path: &Path, m: usize) -> Result<ArcVector<f64>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(path.to_owned(), e))?;
    let values = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .map(|tok| {
            tok.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite() && *x > 0.0)
                .ok_or_else(|| Error::Domain(format!("invalid initial conductivity '{tok}'")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != m {
        return Err(Error::Dimension {
            expected: m,
            found: values.len(),
        }
        .into());
    }
    Ok(values.into())
}

fn print_report(report: &RunReport, json: bool) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    let text = if json {
        serde_json::to_string_pretty(report)? + "\n"
    } else {
        report.to_key_value()
    };
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::Io("<stdout>".into(), e))
}

fn emit(text: &str) -> Result<(), Failure> {
    io::stdout()
        .lock()
        .write_all(text.as_bytes())
        .map_err(|e| Failure::Io("<stdout>".into(), e))
}

fn solve(
    input: &Input,
    solver: &SolverArgs,
    trace: Option<&Path>,
    json: bool,
) -> Result<u8, Failure> {
    let file = load(&input.file, input.format)?;
    let sigma0 = solver.sigma0(file.graph.arc_count())?;
    let analysis = Analysis {
        oracle: true,
        ..Analysis::default()
    };
    let solved = solve_instance(
        &file.graph,
        &file.sources,
        &sigma0,
        &solver.config(),
        analysis,
        file.name.clone(),
    )?;
    if let (Some(path), Some(run)) = (trace, &solved.run) {
        let handle = fs::File::create(path).map_err(|e| Failure::Io(path.to_owned(), e))?;
        write_trace_csv(io::BufWriter::new(handle), &run.trace)
            .map_err(|e| Failure::Io(path.to_owned(), e))?;
    }
    print_report(&solved.report, json)?;
    Ok(solved.report.exit_code() as u8)
}

fn compare_one(
    path: &Path,
    format: Option<Format>,
    solver: &SolverArgs,
) -> Result<RunReport, Failure> {
    let file = load(path, format)?;
    let sigma0 = solver.sigma0(file.graph.arc_count())?;
    let solved = solve_instance(
        &file.graph,
        &file.sources,
        &sigma0,
        &solver.config(),
        Analysis::full(),
        file.name.clone(),
    )?;
    Ok(solved.report)
}

fn compare(
    files: &[PathBuf],
    format: Option<Format>,
    solver: &SolverArgs,
    jobs: usize,
    json: bool,
) -> Result<u8, Failure> {
    let jobs = jobs.clamp(1, files.len().max(1));
    let chunk = files.len().div_ceil(jobs);
    let results: Vec<Result<RunReport, Failure>> = std::thread::scope(|scope| {
        let handles: Vec<_> = files
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|p| compare_one(p, format, solver))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("compare worker panicked"))
            .collect()
    });

    let mut failed = 0usize;
    let mut reports = Vec::new();
    for (path, result) in files.iter().zip(results) {
        match result {
            Ok(report) => {
                if !report.all_checks_passed() {
                    failed += 1;
                }
                reports.push(report);
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                failed += 1;
            }
        }
    }
    if json {
        emit(&(serde_json::to_string_pretty(&reports)? + "\n"))?;
    } else {
        let text: Vec<String> = reports.iter().map(RunReport::to_key_value).collect();
        emit(&text.join("\n"))?;
    }
    if failed > 0 {
        eprintln!("{failed} of {} instances failed comparison", files.len());
        Ok(EXIT_COMPARE_FAILED)
    } else {
        Ok(0)
    }
}

fn oracle(input: &Input, json: bool) -> Result<u8, Failure> {
    let file = load(&input.file, input.format)?;
    let (g, b) = (&file.graph, &file.sources);
    let optimal = match solve_exact(g, b) {
        Err(Error::Infeasible) => {
            emit("status=Infeasible\n")?;
            return Ok(2);
        }
        other => other?,
    };
    let dual = dual_on_optimal_set(g, &optimal)?;
    if json {
        let value = serde_json::json!({
            "optimal_cost": optimal.optimal_cost,
            "flow": optimal.witness_flow,
            "optimal_arcs": optimal.optimal_arcs,
            "node_potential": optimal.node_potential,
            "canonical_dual": dual.potential,
            "optimal_set_connected": dual.connected,
        });
        emit(&(serde_json::to_string_pretty(&value)? + "\n"))?;
    } else {
        let list = |it: Vec<String>| it.join(",");
        let mut text = format!("optimal_cost={}\n", optimal.optimal_cost);
        text += &format!(
            "flow={}\n",
            list(optimal.witness_flow.iter().map(f64::to_string).collect())
        );
        text += &format!(
            "optimal_arcs={}\n",
            list(optimal.optimal_arcs.iter().map(usize::to_string).collect())
        );
        text += &format!(
            "canonical_dual={}\n",
            list(
                dual.potential
                    .iter()
                    .map(|p| p.map_or("-".into(), |x| x.to_string()))
                    .collect()
            )
        );
        text += &format!("optimal_set_connected={}\n", dual.connected);
        emit(&text)?;
    }
    Ok(0)
}

fn dual(input: &Input, json: bool) -> Result<u8, Failure> {
    let file = load(&input.file, input.format)?;
    let (g, b) = (&file.graph, &file.sources);
    let ext = extension_for(g, b)?;
    let check = check_inf_harmonic(g, &ext.arcs, &ext.potential, &b.support());
    if json {
        let value = serde_json::json!({
            "extension": ext,
            "harmonic_check": check,
        });
        emit(&(serde_json::to_string_pretty(&value)? + "\n"))?;
    } else {
        let join = |it: &mut dyn Iterator<Item = String>| it.collect::<Vec<_>>().join(",");
        let mut text = format!(
            "arcs={}\n",
            join(&mut ext.arcs.iter().map(usize::to_string))
        );
        text += &format!(
            "potential={}\n",
            join(
                &mut ext
                    .potential
                    .iter()
                    .map(|p| p.map_or("-".into(), |x| x.to_string()))
            )
        );
        for (r, set) in ext.slopes.iter().zip(&ext.level_sets) {
            text += &format!(
                "level {r}={}\n",
                join(&mut set.iter().map(usize::to_string))
            );
        }
        text += &format!(
            "unreached={}\n",
            join(&mut ext.unreached.iter().map(usize::to_string))
        );
        text += &format!(
            "violators={}\n",
            join(&mut check.violators.iter().map(usize::to_string))
        );
        text += &format!(
            "skipped={}\n",
            join(&mut check.skipped.iter().map(usize::to_string))
        );
        emit(&text)?;
    }
    Ok(if check.violators.is_empty() { 0 } else { 1 })
}

fn check(input: &Input) -> Result<u8, Failure> {
    let file = load(&input.file, input.format)?;
    let feasible = is_feasible(&file.graph, &file.sources);
    let mut text = format!("feasible={feasible}\n");
    if let Ok(bounds) = cut_bounds(&file.graph, &file.sources) {
        text += &format!(
            "b_star_max={}\nb_star_min={}\n",
            bounds.b_star_max, bounds.b_star_min
        );
    }
    emit(&text)?;
    Ok(if feasible { 0 } else { 2 })
}

fn random(
    seed: u64,
    spec: GeneratorSpec,
    format: Format,
    output: Option<&Path>,
) -> Result<u8, Failure> {
    let file: InstanceFile64 = random_instance(seed, spec)?;
    let text = serialize_as(&file, format);
    match output {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Io(path.to_owned(), e))?,
        None => emit(&text)?,
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PHYSARUM_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve {
            input,
            solver,
            trace,
            json,
        } => solve(input, solver, trace.as_deref(), *json),
        Command::Oracle { input, json } => oracle(input, *json),
        Command::Compare {
            files,
            format,
            solver,
            jobs,
            json,
        } => compare(files, *format, solver, *jobs, *json),
        Command::Dual { input, json } => dual(input, *json),
        Command::Random {
            seed,
            nodes,
            arcs,
            lmax,
            bmax,
            format,
            output,
        } => random(
            *seed,
            GeneratorSpec {
                nodes: *nodes,
                arcs: *arcs,
                max_length: *lmax,
                max_supply: *bmax,
            },
            *format,
            output.as_deref(),
        ),
        Command::Check { input } => check(input),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Failure::Solver(Error::Infeasible) => 2,
                _ => EXIT_ERROR,
            })
        }
    }
}
