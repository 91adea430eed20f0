//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 assumption failure,
//! 3 solver failure, 4 acceptance gate not met.

mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::ExperimentConfig;

use crate::error::{Error, Result};
use crate::finite_market::{solve_full_equilibrium, solve_minor_clearing, EquilibriumSummary};
use crate::mean_field::solve_mfg;
use crate::metrics::convergence_study;
use crate::model::{check_all, load_model, ModelSpec};
use crate::optimality::{perturbation_test, Level, PerturbationOptions, PerturbationReport};
use crate::output::{write_agent_fields, write_file, write_json, write_node_fields};
use crate::scenario::{build_lattice, sample_idiosyncratic, NodeField, NoiseLattice, TimeGrid, DEFAULT_SEED};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ASSUMPTION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_GATE: i32 = 4;

/// Slope gate of the convergence study.
pub const SLOPE_GATE: f64 = -0.35;
/// Tolerance on ΔJ in the optimality suite.
pub const DELTA_J_TOL: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(name = "clearing", version, about = "Market-clearing equilibria with a major trader on discrete-noise lattices")]
pub struct Cli {
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the model assumptions
    Check(CommonArgs),
    /// Solve the finite-N equilibrium
    SolveN(SolveNArgs),
    /// Solve the mean-field equilibrium
    SolveMfg(CommonArgs),
    /// Convergence study of the finite-N price toward the mean-field price
    Converge(ConvergeArgs),
    /// Perturbation checks of optimality
    Verify(VerifyArgs),
    /// Write the common-noise lattice
    LatticeDump(CommonArgs),
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Model file (TOML or JSON)
    #[arg(long)]
    model: Option<PathBuf>,

    /// Experiment config (TOML)
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, env = "CLEARING_OUT")]
    out: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    /// Solve even if assumption checks fail
    #[arg(long)]
    force: bool,

    /// Securities pay c⁰_T at maturity
    #[arg(long)]
    maturity: bool,

    /// Number of minor agents
    #[arg(long)]
    agents: Option<usize>,

    #[arg(long)]
    steps: Option<usize>,

    #[arg(long)]
    horizon: Option<f64>,

    #[arg(long)]
    branching: Option<usize>,
}

#[derive(Args, Debug)]
struct SolveNArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Clear the market against a zero major flow instead of the major-optimal one
    #[arg(long)]
    zero_flow: bool,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Population sizes, comma separated
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,

    #[arg(long)]
    resamples: Option<usize>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,

    #[arg(long)]
    directions: Option<usize>,
}

/// Effective settings after merging flags, config and defaults.
#[derive(Clone, Debug, Serialize)]
struct Settings {
    model: PathBuf,
    out: PathBuf,
    seed: u64,
    force: bool,
    maturity: bool,
    agents: Option<usize>,
    steps: Option<usize>,
    horizon: Option<f64>,
    branching: Option<usize>,
    n_list: Vec<usize>,
    resamples: usize,
    directions: usize,
}

struct Failure {
    code: i32,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match error {
            Error::Assumption(_) => EXIT_ASSUMPTION,
            Error::Singular(_) | Error::NotConverged { .. } | Error::Lattice(_) => EXIT_SOLVER,
            _ => EXIT_USAGE,
        };
        Failure { code, error }
    }
}

fn usage(error: Error) -> Failure {
    Failure { code: EXIT_USAGE, error }
}

fn settings(args: &CommonArgs, n_list: Option<Vec<usize>>, resamples: Option<usize>, directions: Option<usize>) -> Result<Settings> {
    let cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let model = args
        .model
        .clone()
        .or(cfg.model)
        .ok_or_else(|| Error::Validation("no model given (use --model or a config with `model`)".into()))?;
    Ok(Settings {
        model,
        out: args.out.clone().or(cfg.output.directory).unwrap_or_else(|| PathBuf::from("out")),
        seed: args.seed.or(cfg.run.seed).unwrap_or(DEFAULT_SEED),
        force: args.force,
        maturity: args.maturity,
        agents: args.agents.or(cfg.run.agents),
        steps: args.steps.or(cfg.grid.steps),
        horizon: args.horizon.or(cfg.grid.horizon),
        branching: args.branching.or(cfg.grid.branching),
        n_list: n_list.or(cfg.run.n_list).unwrap_or_else(|| vec![8, 16, 32, 64]),
        resamples: resamples.or(cfg.run.resamples).unwrap_or(64),
        directions: directions.or(cfg.run.directions).unwrap_or(20),
    })
}

fn load(s: &Settings) -> Result<(ModelSpec, NoiseLattice, Vec<u8>)> {
    let bytes = std::fs::read(&s.model).map_err(|e| Error::Validation(format!("cannot read model {}: {e}", s.model.display())))?;
    let mut spec = load_model(&s.model)?;
    if s.maturity {
        spec.maturity = true;
    }
    if let Some(a) = s.agents {
        spec.dims.agents = a;
    }
    if let Some(k) = s.steps {
        spec.noise.steps = k;
    }
    if let Some(t) = s.horizon {
        spec.noise.horizon = t;
    }
    if let Some(b) = s.branching {
        spec.noise.branching = b;
    }
    spec.validate()?;
    let lattice = build_lattice(TimeGrid::new(spec.noise.horizon, spec.noise.steps)?, &spec.dims, spec.noise.branching)?;
    Ok((spec, lattice, bytes))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: String,
    seed: u64,
    threads: usize,
    versions: Versions,
    settings: &'a Settings,
    wall_time_seconds: f64,
    exit_code: i32,
}

#[derive(Serialize)]
struct Versions {
    clearing_core: &'static str,
}

fn config_hash(model: &[u8], s: &Settings) -> String {
    let mut h = Sha256::new();
    h.update(model);
    h.update(serde_json::to_vec(s).unwrap_or_default());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct DiagnosticsFile {
    error: String,
    exit_code: i32,
}

/// Parse `args` and run; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command, n)),
            Err(e) => {
                eprintln!("error: cannot build thread pool: {e}");
                EXIT_USAGE
            }
        },
        None => dispatch(&cli.command, rayon::current_num_threads()),
    }
}

fn dispatch(command: &Command, threads: usize) -> i32 {
    let (name, s) = match command {
        Command::Check(a) => ("check", settings(a, None, None, None)),
        Command::SolveN(a) => ("solve-n", settings(&a.common, None, None, None)),
        Command::SolveMfg(a) => ("solve-mfg", settings(a, None, None, None)),
        Command::LatticeDump(a) => ("lattice-dump", settings(a, None, None, None)),
        Command::Converge(a) => ("converge", settings(&a.common, a.n_list.clone(), a.resamples, None)),
        Command::Verify(a) => ("verify", settings(&a.common, None, None, a.directions)),
    };
    let s = match s {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let start = Instant::now();
    let outcome = load(&s).map_err(usage).and_then(|(spec, lattice, bytes)| {
        let code = match command {
            Command::Check(_) => cmd_check(&spec, &s),
            Command::SolveN(a) => cmd_solve_n(&spec, &lattice, &s, a.zero_flow),
            Command::SolveMfg(_) => cmd_solve_mfg(&spec, &lattice, &s),
            Command::Converge(_) => cmd_converge(&spec, &lattice, &s),
            Command::Verify(_) => cmd_verify(&spec, &lattice, &s),
            Command::LatticeDump(_) => cmd_lattice_dump(&lattice, &s),
        }?;
        Ok((code, bytes))
    });
    let (code, bytes) = match outcome {
        Ok(v) => v,
        Err(f) => {
            eprintln!("error: {}", f.error);
            if f.code == EXIT_SOLVER {
                let _ = write_json(&s.out.join("diagnostics.json"), &DiagnosticsFile { error: f.error.to_string(), exit_code: f.code });
            }
            (f.code, std::fs::read(&s.model).unwrap_or_default())
        }
    };
    let manifest = Manifest {
        command: name,
        config_sha256: config_hash(&bytes, &s),
        seed: s.seed,
        threads,
        versions: Versions { clearing_core: env!("CARGO_PKG_VERSION") },
        settings: &s,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        exit_code: code,
    };
    if let Err(e) = write_json(&s.out.join("manifest.json"), &manifest) {
        eprintln!("error: cannot write manifest: {e}");
        return if code == EXIT_OK { EXIT_USAGE } else { code };
    }
    code
}

type CmdResult = std::result::Result<i32, Failure>;

fn out(s: &Settings, file: &str) -> PathBuf {
    s.out.join(file)
}

fn gate_assumptions(spec: &ModelSpec, s: &Settings) -> std::result::Result<Option<i32>, Failure> {
    if s.force {
        return Ok(None);
    }
    let report = check_all(spec, &spec.default_sample_points())?;
    if report.passed() {
        return Ok(None);
    }
    for f in &report.failures {
        eprintln!("assumption failed: {f}");
    }
    write_json(&out(s, "assumptions.json"), &report).map_err(usage)?;
    Ok(Some(EXIT_ASSUMPTION))
}

fn cmd_check(spec: &ModelSpec, s: &Settings) -> CmdResult {
    let report = check_all(spec, &spec.default_sample_points())?;
    write_json(&out(s, "assumptions.json"), &report).map_err(usage)?;
    for c in &report.clauses {
        println!("{:<20} {:?}", c.clause, c.status);
    }
    if report.passed() {
        Ok(EXIT_OK)
    } else {
        for f in &report.failures {
            eprintln!("assumption failed: {f}");
        }
        Ok(EXIT_ASSUMPTION)
    }
}

fn solver(e: Error) -> Failure {
    match e {
        Error::Assumption(_) => Failure { code: EXIT_ASSUMPTION, error: e },
        Error::Validation(_) | Error::Shape { .. } | Error::Parse(_) | Error::Io(_) | Error::NodeBudget { .. } | Error::Unsupported(_) => usage(e),
        _ => Failure { code: EXIT_SOLVER, error: e },
    }
}

#[derive(Serialize)]
struct SolveNSummary<'a> {
    agents: usize,
    atoms: &'a [usize],
    #[serde(flatten)]
    equilibrium: EquilibriumSummary,
}

fn cmd_solve_n(spec: &ModelSpec, lattice: &NoiseLattice, s: &Settings, zero_flow: bool) -> CmdResult {
    if let Some(code) = gate_assumptions(spec, s)? {
        return Ok(code);
    }
    let atoms = sample_idiosyncratic(&spec.idio, spec.dims.agents, s.seed)?;
    let eq = if zero_flow {
        let flow = NodeField::zeros(lattice.len(), spec.dims.n);
        solve_minor_clearing(spec, lattice, &flow, &atoms)
    } else {
        solve_full_equilibrium(spec, lattice, &atoms)
    }
    .map_err(solver)?;
    let beta = eq.beta_unnormalized();
    let mut fields = vec![("phi", &eq.price), ("beta", &beta)];
    let x0 = eq.x0_unnormalized();
    if let Some(x0) = &x0 {
        fields.push(("x0", x0));
    }
    write_file(&out(s, "price.csv"), |w| write_node_fields(w, lattice, &fields)).map_err(usage)?;
    write_file(&out(s, "alpha.csv"), |w| write_agent_fields(w, lattice, "alpha", &eq.alpha_hat)).map_err(usage)?;
    let summary = SolveNSummary { agents: eq.agents, atoms: &atoms, equilibrium: EquilibriumSummary::from(&eq) };
    write_json(&out(s, "summary.json"), &summary).map_err(usage)?;
    println!("price_t0: {:?}", eq.price.get(0));
    println!("clearing_residual: {}", eq.clearing_residual);
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct MfgSummary {
    price_t0: Vec<f64>,
    beta_hat_t0: Vec<f64>,
    deviation_mean_defect: f64,
    diagnostics: crate::fbsde::SolveDiagnostics,
}

fn cmd_solve_mfg(spec: &ModelSpec, lattice: &NoiseLattice, s: &Settings) -> CmdResult {
    if let Some(code) = gate_assumptions(spec, s)? {
        return Ok(code);
    }
    let mfg = solve_mfg(spec, lattice).map_err(solver)?;
    write_file(&out(s, "price.csv"), |w| {
        write_node_fields(
            w,
            lattice,
            &[("phi", &mfg.price), ("beta", &mfg.beta_hat), ("x0", &mfg.x0), ("xbar", &mfg.xbar), ("ybar", &mfg.ybar)],
        )
    })
    .map_err(usage)?;
    let summary = MfgSummary {
        price_t0: mfg.price.get(0).to_vec(),
        beta_hat_t0: mfg.beta_hat.get(0).to_vec(),
        deviation_mean_defect: mfg.deviation_mean_defect(),
        diagnostics: mfg.diagnostics().clone(),
    };
    write_json(&out(s, "summary.json"), &summary).map_err(usage)?;
    println!("price_t0: {:?}", mfg.price.get(0));
    println!("deviation_mean_defect: {}", summary.deviation_mean_defect);
    Ok(EXIT_OK)
}

fn cmd_converge(spec: &ModelSpec, lattice: &NoiseLattice, s: &Settings) -> CmdResult {
    let report = convergence_study(spec, lattice, &s.n_list, s.resamples, s.seed).map_err(solver)?;
    write_file(&out(s, "convergence.csv"), |w| report.write_csv(w)).map_err(usage)?;
    write_json(&out(s, "convergence_summary.json"), &report_summary(&report)).map_err(usage)?;
    if report.degenerate {
        println!("degenerate study: all price gaps are zero");
        return Ok(EXIT_OK);
    }
    match report.slope() {
        Some(slope) => {
            println!("slope: {slope}");
            Ok(if slope <= SLOPE_GATE { EXIT_OK } else { EXIT_GATE })
        }
        None => {
            eprintln!("slope undefined: fewer than three usable N");
            Ok(EXIT_GATE)
        }
    }
}

#[derive(Serialize)]
struct StudySummary<'a> {
    seed: u64,
    resamples: usize,
    degenerate: bool,
    slope: Option<f64>,
    intercept: Option<f64>,
    slope_se: Option<f64>,
    intercept_se: Option<f64>,
    excluded_n: &'a [usize],
    slope_gate: f64,
    per_n: &'a [crate::metrics::ConvergenceSummary],
    inequality: &'a crate::metrics::InequalityCheck,
}

fn report_summary(r: &crate::metrics::ConvergenceReport) -> StudySummary<'_> {
    StudySummary {
        seed: r.seed,
        resamples: r.resamples,
        degenerate: r.degenerate,
        slope: r.fit.as_ref().map(|f| f.slope),
        intercept: r.fit.as_ref().map(|f| f.intercept),
        slope_se: r.fit.as_ref().map(|f| f.slope_se),
        intercept_se: r.fit.as_ref().map(|f| f.intercept_se),
        excluded_n: &r.excluded_n,
        slope_gate: SLOPE_GATE,
        per_n: &r.summary,
        inequality: &r.inequality,
    }
}

#[derive(Serialize)]
struct VerifySummary<'a> {
    tolerance: f64,
    min_delta_j: f64,
    gradient_norm: f64,
    levels: Vec<&'a PerturbationReport>,
    skipped: Vec<String>,
}

fn cmd_verify(spec: &ModelSpec, lattice: &NoiseLattice, s: &Settings) -> CmdResult {
    if let Some(code) = gate_assumptions(spec, s)? {
        return Ok(code);
    }
    let atoms = sample_idiosyncratic(&spec.idio, spec.dims.agents, s.seed)?;
    let opts = PerturbationOptions { directions: s.directions, seed: s.seed, ..Default::default() };
    let mut levels = vec![Level::Minor, Level::MajorN];
    let mut skipped = Vec::new();
    if spec.minor.is_homogeneous() {
        levels.push(Level::MajorMfg);
    } else {
        skipped.push("major-mfg: heterogeneous minor population".to_string());
    }
    let reports = levels
        .iter()
        .map(|&l| perturbation_test(spec, lattice, l, &atoms, &opts))
        .collect::<Result<Vec<_>>>()
        .map_err(solver)?;
    for r in &reports {
        write_file(&out(s, &format!("perturbation_{}.csv", r.level.name())), |w| r.write_csv(w)).map_err(usage)?;
        println!("{:<10} min_delta_J {:e}  gradient_norm {:e}", r.level.name(), r.min_delta_j, r.gradient_norm);
    }
    let summary = VerifySummary {
        tolerance: DELTA_J_TOL,
        min_delta_j: reports.iter().map(|r| r.min_delta_j).fold(f64::INFINITY, f64::min),
        gradient_norm: reports.iter().map(|r| r.gradient_norm).fold(0.0, f64::max),
        levels: reports.iter().collect(),
        skipped,
    };
    write_json(&out(s, "verify_summary.json"), &summary).map_err(usage)?;
    Ok(if reports.iter().all(|r| r.passes(DELTA_J_TOL)) { EXIT_OK } else { EXIT_GATE })
}

fn cmd_lattice_dump(lattice: &NoiseLattice, s: &Settings) -> CmdResult {
    write_file(&out(s, "lattice.csv"), |w| lattice.write_csv(w)).map_err(usage)?;
    println!("nodes: {}", lattice.len());
    Ok(EXIT_OK)
}
