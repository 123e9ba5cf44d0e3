//! `glab` command-line driver: every experiment as a subcommand, writing
//! `summary.json` plus CSV tables into the output directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
pub mod config;
mod xi;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{parse_param, RunConfig};

pub use commands::Artifacts;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_ASSERT: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Lib(#[from] glab::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_DOMAIN,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "glab",
    version,
    about = "Numerical experiments for G-expectations and G-BSDEs"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; they override the config file.
#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// TOML config with [generator], [grid], [driver], [schedule], [mc]
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Artifact directory
    #[arg(long, global = true, env = "GLAB_OUTPUT_DIR")]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs sequentially
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Validate the configuration and exit
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Exit with status 3 when an acceptance verdict fails
    #[arg(long = "assert", global = true)]
    pub assert: bool,
    #[arg(long, global = true)]
    pub sigma_low: Option<f64>,
    #[arg(long, global = true)]
    pub sigma_high: Option<f64>,
    /// Regularization schedule, comma separated and decreasing
    #[arg(long, global = true, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub x_min: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub x_max: Option<f64>,
    #[arg(long, global = true)]
    pub nx: Option<usize>,
    /// Horizon
    #[arg(long = "T", global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub cfl_safety: Option<f64>,
    /// Driver preset
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Preset parameter as key=value; repeatable
    #[arg(long = "param", global = true, value_parser = parse_param, allow_hyphen_values = true)]
    pub params: Vec<(String, f64)>,
    /// Monte Carlo paths
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Monte Carlo time steps
    #[arg(long, global = true)]
    pub mc_steps: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ê[φ(B_T)] from the G-heat equation, checked against the lattice
    Gexpect(commands::GexpectArgs),
    /// Ê[ψ(B_t1, …, B_tN)] by backward recursion, checked against the lattice
    Cylinder(commands::CylinderArgs),
    /// Doob maximal inequality on a lattice
    Doob(commands::DoobArgs),
    /// Solve the nonlinear Feynman–Kac equation and export the fields
    SolvePde(commands::SolvePdeArgs),
    /// Solve the regularized family over the ε schedule
    Gbsde(commands::GbsdeArgs),
    /// ε-convergence deltas against the stability bound
    Convergence(commands::ConvergenceArgs),
    /// Minimum of u_xx across the ε family
    Curvature(commands::GbsdeArgs),
    /// Monte Carlo ∂_x u against the PDE solution
    SensitivityX(commands::SensitivityArgs),
    /// Monte Carlo ∂_t u against the PDE solution
    SensitivityT(commands::SensitivityArgs),
    /// One-sided derivatives at payoff kinks
    Kink(commands::KinkArgs),
    /// Semiconvexity constant under grid refinement
    Semiconvexity(commands::RefineArgs),
    /// Dynamic programming identity on a lattice
    DpCheck(commands::DpCheckArgs),
    /// Lower bound showing the ε^{−2/5} blow-up
    Counterexample(commands::CounterexampleArgs),
    /// Stability estimate between two drivers under refinement
    Stability(commands::StabilityArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gexpect(_) => "gexpect",
            Command::Cylinder(_) => "cylinder",
            Command::Doob(_) => "doob",
            Command::SolvePde(_) => "solve-pde",
            Command::Gbsde(_) => "gbsde",
            Command::Convergence(_) => "convergence",
            Command::Curvature(_) => "curvature",
            Command::SensitivityX(_) => "sensitivity-x",
            Command::SensitivityT(_) => "sensitivity-t",
            Command::Kink(_) => "kink",
            Command::Semiconvexity(_) => "semiconvexity",
            Command::DpCheck(_) => "dp-check",
            Command::Counterexample(_) => "counterexample",
            Command::Stability(_) => "stability",
        }
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_DOMAIN } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("glab {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let cfg = RunConfig::load(&cli.common)?;
    if let Some(n) = cfg.workers {
        glab::exec::set_workers(n);
    }
    fs::create_dir_all(&cfg.output_dir).map_err(|e| {
        CliError::Config(format!(
            "output dir {} is not writable: {e}",
            cfg.output_dir.display()
        ))
    })?;
    if cli.common.dry_run {
        let effective = serde_json::to_string_pretty(&cfg).expect("config serializes");
        println!("{}: configuration ok\n{effective}", cli.command.name());
        return Ok(EXIT_OK);
    }
    let artifacts = commands::dispatch(&cli.command, &cfg)?;
    artifacts.write(&cfg.output_dir)?;
    println!("{}", artifacts.headline);
    if cli.common.assert && !artifacts.summary.all_pass() {
        let failed: Vec<&str> = artifacts
            .summary
            .verdicts
            .iter()
            .filter(|(_, pass)| !**pass)
            .map(|(name, _)| name.as_str())
            .collect();
        eprintln!("assertion failed: {}", failed.join(", "));
        return Ok(EXIT_ASSERT);
    }
    Ok(EXIT_OK)
}
