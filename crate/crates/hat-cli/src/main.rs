//! `hat` — tree-based aggregation testing with false-split-rate control.
//!
//! Subcommands: `test` runs the step-up procedure on a tree with supplied
//! p-values; `metrics` scores an achieved aggregation against the truth;
//! `simulate` estimates FSR and power by Monte Carlo; `pvalues-anova` and
//! `pvalues-regression` construct per-node p-values from data. Every
//! command is a pure function of its inputs, flags, and seed, and emits a
//! manifest beside each file output; stderr carries progress, stdout stays
//! clean for piping.

mod commands;
mod io;

use clap::{Parser, Subcommand};

use hat_core::HatError;

/// Exit codes: 0 success, 2 input validation, 3 solver non-convergence,
/// 4 internal invariant violation.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub code: i32,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> CliError {
        CliError {
            message: message.into(),
            code: 2,
        }
    }
}

impl From<HatError> for CliError {
    fn from(e: HatError) -> CliError {
        let code = match &e {
            HatError::NonConvergence(_) => 3,
            HatError::Internal(_) => 4,
            _ => 2,
        };
        CliError {
            message: e.to_string(),
            code,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "hat",
    version,
    about = "Tree-based aggregation testing with false-split-rate control"
)]
struct Cli {
    /// Worker threads for simulation and per-node solvers (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a tree's nodes against supplied p-values and emit the
    /// aggregation.
    Test(commands::TestArgs),
    /// Score an achieved partition against a true partition (exact
    /// rationals).
    Metrics(commands::MetricsArgs),
    /// Monte-Carlo estimation of FSR and power over a scenario.
    Simulate(commands::SimulateArgs),
    /// ANOVA p-values (known sigma) from per-leaf observations.
    PvaluesAnova(commands::PvaluesAnovaArgs),
    /// Debiased quadratic-form p-values from a regression design.
    PvaluesRegression(commands::PvaluesRegressionArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Ignore failure: the pool can only be initialized once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let result = match cli.command {
        Command::Test(args) => commands::run_test(args),
        Command::Metrics(args) => commands::run_metrics(args),
        Command::Simulate(args) => commands::run_simulate(args),
        Command::PvaluesAnova(args) => commands::run_pvalues_anova(args),
        Command::PvaluesRegression(args) => commands::run_pvalues_regression(args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}
