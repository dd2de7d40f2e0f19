//! `netslice`: run scenarios, compare policy grids and validate run logs.

mod grid;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use netslice::engine::{run, EngineError, Variant};
use netslice::milp::{BuiltinSolver, ExternalSolver, MilpSolver, SOLVER_ENV};
use netslice::report::{self, ReportError};
use netslice::scenario::{load_scenario, Backend, Overrides, Scenario, ScenarioError};

#[derive(Parser)]
#[command(name = "netslice", version, about = "Prioritized network-slice admission simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its CSV artifacts.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory.
        #[arg(long, default_value = "netslice-out")]
        out: PathBuf,
    },
    /// Run a grid of settings over several seeds and aggregate the results.
    Compare {
        /// Grid file.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value = "netslice-compare")]
        out: PathBuf,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Replay the logs of a run against its scenario.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Directory holding decisions.csv and assignments.csv.
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "delta-p")]
    delta_p: Option<f64>,
    #[arg(long)]
    horizon: Option<u32>,
    #[arg(long = "max-requests")]
    max_requests: Option<usize>,
    #[arg(long)]
    solver: Option<Backend>,
    /// Per-solve time limit in seconds.
    #[arg(long = "time-limit")]
    time_limit: Option<f64>,
    #[arg(long = "node-limit")]
    node_limit: Option<u64>,
    #[arg(long = "mip-gap")]
    mip_gap: Option<f64>,
    #[arg(long = "adaptation-cost")]
    adaptation_cost: Option<f64>,
}

impl ScenarioArgs {
    /// Loads the scenario and applies the flags. Without an explicit
    /// `--label`, policy overrides are appended to the scenario label.
    fn load(&self) -> Result<Scenario, CliError> {
        let mut s = load_scenario(&self.scenario)?;
        let mut label = s.label.clone();
        if let Some(a) = self.alpha {
            label.push_str(&format!("-alpha{a}"));
        }
        if let Some(d) = self.delta_p {
            label.push_str(&format!("-dp{d}"));
        }
        let o = Overrides {
            label: Some(self.label.clone().unwrap_or(label)),
            seed: self.seed,
            variant: self.variant,
            alpha: self.alpha,
            delta_p: self.delta_p,
            horizon: self.horizon,
            max_requests: self.max_requests,
            solver: self.solver,
            time_limit: self.time_limit,
            node_limit: self.node_limit,
            mip_gap: self.mip_gap,
            adaptation_cost: self.adaptation_cost,
        };
        o.apply(&mut s)?;
        Ok(s)
    }
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn solver_for(backend: Backend) -> Result<Box<dyn MilpSolver + Sync>, CliError> {
    match backend {
        Backend::Builtin => Ok(Box::new(BuiltinSolver)),
        Backend::External => ExternalSolver::from_env()
            .map(|s| Box::new(s) as Box<dyn MilpSolver + Sync>)
            .ok_or_else(|| CliError::Config(format!("the external solver needs {SOLVER_ENV} set to a binary"))),
    }
}

fn cmd_run(args: &ScenarioArgs, out: &Path) -> Result<(), CliError> {
    let s = args.load()?;
    let solver = solver_for(s.backend)?;
    let output = run(&s.config, &s.network, &s.catalog, solver.as_ref())?;
    report::write_run(out, &s.label, &s, &output)?;
    let m = &output.metrics;
    println!(
        "{} seed {} {}: premium {}/{} standard {}/{} accepted, mean delay {:.3}, cost per slice {:.2}, {} violations",
        s.label,
        s.config.seed,
        s.config.variant,
        m.premium.accepted,
        m.premium.requests,
        m.standard.accepted,
        m.standard.requests,
        m.mean_delay(),
        m.cost_per_slice(),
        output.violations.len()
    );
    if output.violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{} safety violations, first: {}",
            output.violations.len(),
            output.violations[0].violation.row
        )))
    }
}

fn cmd_validate(args: &ScenarioArgs, dir: &Path) -> Result<(), CliError> {
    let s = args.load()?;
    let violations = report::validate_dir(&s, dir)?;
    if violations.is_empty() {
        println!("{}: no violations", dir.display());
        return Ok(());
    }
    for v in &violations {
        match v.request_id {
            Some(id) => println!("request {id}: {} ({})", v.row, v.amount),
            None => println!("{} ({})", v.row, v.amount),
        }
    }
    Err(CliError::Runtime(format!("{} violations", violations.len())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, out } => cmd_run(scenario, out),
        Command::Compare { grid, out, jobs } => grid::cmd_compare(grid, out, *jobs),
        Command::Validate { scenario, run } => cmd_validate(scenario, run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
