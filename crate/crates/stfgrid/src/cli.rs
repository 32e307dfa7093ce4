//! Command-line front end over the solvers: `pf`, `opf`, `ybus`, `tableau`,
//! and `toggle-breaker` subcommands.
//!
//! Exit codes: 0 on success, 1 when a solver fails (non-convergence,
//! singular system, violated check), 2 on input errors (unreadable or
//! malformed files, bad arguments). Verbosity comes from the `STFGRID_LOG`
//! environment variable (`error` .. `trace`).

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fixtures;
use crate::io::matpower::{self, MatpowerError};
use crate::io::nodebreaker::{self, NodeBreakerError};
use crate::io::report::{opf_report, powerflow_report};
use crate::netmodel::{ElementId, Network, SwitchState};
use crate::opf::{build_opf, check_feasibility, solve_opf, OpfError, OpfOptions};
use crate::powerflow::{
    solve_powerflow_stf, solve_powerflow_ybus, BusSpec, PowerFlowOptions, PowerFlowSolution,
};
use crate::reduction::{direct_ybus, reduce_to_ybus};
use crate::tableau::assemble_tableau;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Parser)]
#[command(
    name = "stfgrid",
    about = "Power flow and optimal power flow on the sparse tableau formulation",
    version
)]
pub struct Cli {
    /// Seed for randomized test-data generation (`ybus --random`).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Newton power flow from a flat start.
    Pf(PfArgs),
    /// Interior-point optimal power flow.
    Opf(OpfArgs),
    /// Bus admittance matrix via tableau reduction.
    Ybus(YbusArgs),
    /// Assemble the tableau and dump it as MatrixMarket.
    Tableau(TableauArgs),
    /// Rewrite a node-breaker document with one breaker toggled.
    ToggleBreaker(ToggleArgs),
}

#[derive(Args)]
pub struct PfArgs {
    /// Case file (`.m` MATPOWER or `.toml` node-breaker).
    pub case: PathBuf,
    #[arg(long, value_enum, default_value_t = Formulation::Stf)]
    pub formulation: Formulation,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    /// Write the JSON solution report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Formulation {
    /// Newton iteration on the full tableau system.
    Stf,
    /// Classical Ybus power flow (requires a reducible network).
    Ybus,
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formulation::Stf => "stf",
            Formulation::Ybus => "ybus",
        })
    }
}

#[derive(Args)]
pub struct OpfArgs {
    /// Case file (`.m` MATPOWER or `.toml` node-breaker).
    pub case: PathBuf,
    /// Solver options file (TOML: max_iter, tol, barrier_init, print_level).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the KKT tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Override the iteration cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Write the JSON solution report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct YbusArgs {
    /// Case file (`.m` MATPOWER or `.toml` node-breaker).
    pub case: PathBuf,
    /// Cross-check the reduction against the closed-form per-branch Ybus.
    #[arg(long)]
    pub check_lemma1: bool,
    /// Also check this many random reducible networks (seeded by --seed).
    #[arg(long, requires = "check_lemma1", default_value_t = 0)]
    pub random: usize,
    /// Write the admittance matrix here as MatrixMarket.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TableauArgs {
    /// Case file (`.m` MATPOWER or `.toml` node-breaker).
    pub case: PathBuf,
    /// MatrixMarket destination for the assembled T.
    #[arg(long)]
    pub dump: PathBuf,
}

#[derive(Args)]
pub struct ToggleArgs {
    /// Node-breaker document (`.toml`).
    pub case: PathBuf,
    /// Element index of the breaker to toggle.
    #[arg(long)]
    pub element: usize,
    /// New switch state: 0 open, 1 closed.
    #[arg(long)]
    pub state: u8,
    /// Write the rewritten document here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Why a run failed, carrying the exit code.
#[derive(Debug)]
enum CliError {
    /// Unreadable or malformed input, unusable arguments.
    Input(String),
    /// The mathematics failed: no convergence, singular system, failed check.
    Solver(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Solver(m) => m,
        }
    }
}

impl From<MatpowerError> for CliError {
    fn from(e: MatpowerError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<NodeBreakerError> for CliError {
    fn from(e: NodeBreakerError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<OpfError> for CliError {
    fn from(e: OpfError) -> Self {
        match &e {
            OpfError::Solver(_) | OpfError::Tableau(_) | OpfError::Reduction(_) => {
                CliError::Solver(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

fn solver_err(e: impl fmt::Display) -> CliError {
    CliError::Solver(e.to_string())
}

/// Entry point used by the binary: parses `std::env::args`, runs, returns
/// the exit code.
pub fn run() -> i32 {
    init_logging();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("STFGRID_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Pf(args) => run_pf(args),
        Command::Opf(args) => run_opf(args),
        Command::Ybus(args) => run_ybus(args, cli.seed),
        Command::Tableau(args) => run_tableau(args),
        Command::ToggleBreaker(args) => run_toggle(args),
    }
}

/// A loaded case: solver inputs plus the file's own bus numbering.
struct LoadedCase {
    name: String,
    network: Network,
    spec: Vec<BusSpec>,
    bus_ids: Vec<i64>,
}

fn load_case(path: &Path) -> Result<LoadedCase, CliError> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "case".to_string());
    match path.extension().and_then(|e| e.to_str()) {
        Some("m") => {
            let parsed = matpower::load_matpower(path)?;
            let bus_ids = (0..parsed.network.n_buses())
                .map(|j| parsed.case.external_id(j))
                .collect();
            Ok(LoadedCase { name, network: parsed.network, spec: parsed.spec, bus_ids })
        }
        Some("toml") => {
            let (network, spec) = nodebreaker::parse_nodebreaker(path)?;
            let bus_ids = network.buses().iter().map(|b| b.id.0 as i64).collect();
            Ok(LoadedCase { name, network, spec, bus_ids })
        }
        other => Err(CliError::Input(format!(
            "unrecognized case extension {:?} (expected .m or .toml): {}",
            other.unwrap_or(""),
            path.display()
        ))),
    }
}

fn write_report(path: &Path, json: &str) -> Result<(), CliError> {
    std::fs::write(path, json)?;
    println!("report written to {}", path.display());
    Ok(())
}

fn run_pf(args: &PfArgs) -> Result<(), CliError> {
    let case = load_case(&args.case)?;
    let options = PowerFlowOptions { tol: args.tol, max_iter: args.max_iter };
    let started = Instant::now();
    let sol: PowerFlowSolution = match args.formulation {
        Formulation::Stf => solve_powerflow_stf(&case.network, &case.spec, &options),
        Formulation::Ybus => solve_powerflow_ybus(&case.network, &case.spec, &options),
    }
    .map_err(solver_err)?;
    let elapsed = started.elapsed();

    println!(
        "{}: {} power flow converged in {} iterations ({:.1} ms)",
        case.name,
        args.formulation,
        sol.iterations,
        elapsed.as_secs_f64() * 1e3
    );
    println!("{:>6} {:>10} {:>10}", "bus", "vm_pu", "va_deg");
    for (j, v) in sol.v_bus.iter().enumerate() {
        println!("{:>6} {:>10.6} {:>10.6}", case.bus_ids[j], v.norm(), v.arg().to_degrees());
    }
    println!("max residual {:.3e}", sol.residuals.max());

    if let Some(out) = &args.out {
        let report = powerflow_report(
            &case.name,
            &args.formulation.to_string(),
            &case.network,
            &case.bus_ids,
            &sol,
        );
        write_report(out, &report.to_json())?;
    }
    Ok(())
}

fn run_opf(args: &OpfArgs) -> Result<(), CliError> {
    let case = load_case(&args.case)?;
    let mut options = match &args.config {
        Some(path) => OpfOptions::load(path).map_err(|e| CliError::Input(e.to_string()))?,
        None => OpfOptions::default(),
    };
    if let Some(tol) = args.tol {
        options.tol = tol;
    }
    if let Some(max_iter) = args.max_iter {
        options.max_iter = max_iter;
    }

    let reference = case
        .spec
        .iter()
        .position(|s| matches!(s, BusSpec::Slack { .. }))
        .ok_or_else(|| CliError::Input("case declares no slack bus".to_string()))?;
    let problem = build_opf(&case.network, crate::netmodel::BusId(reference), &options)?;
    let started = Instant::now();
    let sol = solve_opf(&problem, &options)?;
    let elapsed = started.elapsed();

    println!(
        "{}: objective {:.2} $/h after {} iterations ({:.1} ms)",
        case.name,
        sol.objective,
        sol.iterations,
        elapsed.as_secs_f64() * 1e3
    );
    let audit = check_feasibility(&sol, &case.network, 1e-6)?;
    println!(
        "feasibility at 1e-6: {} (kkt error {:.2e})",
        if audit.is_feasible() { "pass" } else { "VIOLATED" },
        sol.kkt.max()
    );
    if !audit.is_feasible() {
        for fam in audit.flagged() {
            eprintln!("  {fam} violated by {:.3e}", audit.violation(fam));
        }
        return Err(CliError::Solver("solution failed the feasibility audit".to_string()));
    }

    if let Some(out) = &args.out {
        let report = opf_report(&case.name, &case.network, &case.bus_ids, &problem, &sol);
        write_report(out, &report.to_json())?;
    }
    Ok(())
}

const LEMMA1_TOL: f64 = 1e-9;

fn run_ybus(args: &YbusArgs, seed: u64) -> Result<(), CliError> {
    let case = load_case(&args.case)?;
    let ybus = reduce_to_ybus(&case.network).map_err(solver_err)?;
    let n = case.network.n_buses();
    println!("{}: ybus {n} x {n}, {} nonzeros", case.name, ybus.entries().len());

    if args.check_lemma1 {
        let direct = direct_ybus(&case.network).map_err(solver_err)?;
        let diff = ybus.max_abs_diff(&direct);
        println!("max |reduced - direct| = {diff:.3e} (tol {LEMMA1_TOL:.0e})");
        if diff >= LEMMA1_TOL {
            return Err(CliError::Solver(format!(
                "reduction disagrees with the closed-form Ybus by {diff:.3e}"
            )));
        }
        if args.random > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut worst = 0.0f64;
            for k in 0..args.random {
                let net = fixtures::random_reducible_network(&mut rng);
                let d = reduce_to_ybus(&net)
                    .map_err(solver_err)?
                    .max_abs_diff(&direct_ybus(&net).map_err(solver_err)?);
                worst = worst.max(d);
                if d >= LEMMA1_TOL {
                    return Err(CliError::Solver(format!(
                        "random network {k} (seed {seed}) disagrees by {d:.3e}"
                    )));
                }
            }
            println!(
                "{} random reducible networks (seed {seed}): worst diff {worst:.3e}",
                args.random
            );
        }
    }

    if let Some(out) = &args.out {
        let mut w = BufWriter::new(File::create(out)?);
        let entries: Vec<(usize, usize, Complex64)> =
            ybus.entries().iter().map(|t| (t.row, t.col, t.val)).collect();
        crate::sparse::write_matrix_market_complex(&mut w, n, n, &entries)?;
        w.flush()?;
        println!("ybus written to {}", out.display());
    }
    Ok(())
}

fn run_tableau(args: &TableauArgs) -> Result<(), CliError> {
    let case = load_case(&args.case)?;
    let injections = vec![Complex64::ZERO; case.network.n_buses()];
    let system = assemble_tableau(&case.network, &injections).map_err(solver_err)?;
    let d = system.layout().dim();
    let nnz = system.nnz();
    println!(
        "{}: tableau {d} x {d}, {nnz} nonzeros ({:.3}% dense)",
        case.name,
        100.0 * nnz as f64 / (d as f64 * d as f64),
    );
    let mut w = BufWriter::new(File::create(&args.dump)?);
    system.write_matrix_market(&mut w)?;
    w.flush()?;
    println!("tableau written to {}", args.dump.display());
    Ok(())
}

fn run_toggle(args: &ToggleArgs) -> Result<(), CliError> {
    if args.case.extension().and_then(|e| e.to_str()) != Some("toml") {
        return Err(CliError::Input(
            "toggle-breaker operates on node-breaker documents (.toml)".to_string(),
        ));
    }
    let (network, spec) = nodebreaker::parse_nodebreaker(&args.case)?;
    let state = match args.state {
        0 => SwitchState::Open,
        1 => SwitchState::Closed,
        other => {
            return Err(CliError::Input(format!("--state must be 0 or 1, got {other}")));
        }
    };
    let id = ElementId(args.element);
    match network.element(id) {
        None => {
            return Err(CliError::Input(format!(
                "element {id} does not exist ({} elements)",
                network.elements().len()
            )))
        }
        Some(el) if !matches!(el.params(), crate::netmodel::ElementParams::Breaker { .. }) => {
            return Err(CliError::Input(format!("element {id} is not a breaker")));
        }
        Some(_) => {}
    }
    let toggled = fixtures::with_breaker_state(&network, id, state);
    let text = nodebreaker::write_nodebreaker(&toggled, &spec)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, &text)?;
            println!(
                "breaker {id} set to {} ({}); written to {}",
                args.state,
                if state == SwitchState::Closed { "closed" } else { "open" },
                path.display()
            );
        }
        None => print!("{text}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_subcommands() {
        let cli = Cli::try_parse_from(["stfgrid", "pf", "case9.m", "--formulation", "ybus"])
            .unwrap();
        assert!(matches!(
            cli.command,
            Command::Pf(PfArgs { formulation: Formulation::Ybus, .. })
        ));
        let cli = Cli::try_parse_from([
            "stfgrid",
            "--seed",
            "42",
            "ybus",
            "case9.m",
            "--check-lemma1",
            "--random",
            "10",
        ])
        .unwrap();
        assert_eq!(cli.seed, 42);
        assert!(matches!(cli.command, Command::Ybus(YbusArgs { random: 10, .. })));
        let cli = Cli::try_parse_from([
            "stfgrid",
            "toggle-breaker",
            "sub.toml",
            "--element",
            "0",
            "--state",
            "1",
        ])
        .unwrap();
        assert!(matches!(cli.command, Command::ToggleBreaker(ToggleArgs { state: 1, .. })));
    }

    #[test]
    fn random_requires_check_flag() {
        assert!(Cli::try_parse_from(["stfgrid", "ybus", "case9.m", "--random", "5"]).is_err());
    }

    #[test]
    fn opf_solver_errors_map_to_exit_one() {
        let e: CliError = OpfError::Solver(crate::opf::nlp::NlpError::MaxIterations {
            iterations: 7,
            kkt: 1.0,
        })
        .into();
        assert_eq!(e.code(), EXIT_SOLVER);
        let e: CliError = OpfError::NoGenerator.into();
        assert_eq!(e.code(), EXIT_INPUT);
    }
}
