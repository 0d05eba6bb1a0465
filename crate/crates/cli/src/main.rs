// Range checks are written `!(x < b)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sigmalift::Execution;

mod commands;
mod scenario;

use commands::{Context, HocbfArgs};
use scenario::Overrides;

/// Simulate and audit sigmoid constraint-lifting controllers.
///
/// Exit status: 0 when every monitor passes, 1 when a monitor or audit
/// fails, 2 on a configuration or I/O error.
#[derive(Debug, Parser)]
#[command(name = "sigmalift", version)]
struct Cli {
    /// Directory for CSV and JSON outputs (default: the scenario's
    /// `output.dir`, else `out`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Overrides the scenario's Monte-Carlo seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the scenario's integration step.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Run Monte-Carlo draws and grid sweeps on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario: one trajectory from `initial`, or its Monte-Carlo block.
    Run { scenario: PathBuf },
    /// Run the scenario's Monte-Carlo block.
    MonteCarlo {
        scenario: PathBuf,
        /// Overrides the number of draws.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Compare the integral-sigmoid and quadratic Lyapunov designs on the double integrator.
    CompareLyapunov { scenario: PathBuf },
    /// Membership grid of the safe set left by a second-order barrier function.
    HocbfSet {
        /// Optional scenario supplying an `hocbf` block.
        scenario: Option<PathBuf>,
        #[arg(long)]
        alpha1: Option<f64>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        x2_max: Option<f64>,
        /// CSV path (default: `<out-dir>/hocbf_grid.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Audit the plant's structural assumptions over the scenario's safe set.
    Validate {
        scenario: PathBuf,
        #[arg(long, default_value_t = commands::DEFAULT_AUDIT_SAMPLES)]
        samples: usize,
    },
    /// Print the built-in sigmoid families.
    ListFamilies,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Fail,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] sigmalift::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn dispatch(cli: Cli) -> Result<Status, CliError> {
    let count = match &cli.command {
        Command::MonteCarlo { count, .. } => *count,
        _ => None,
    };
    let ctx = Context {
        out_dir: cli.out_dir,
        overrides: Overrides {
            seed: cli.seed,
            dt: cli.dt,
            count,
        },
        exec: if cli.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        },
    };
    match cli.command {
        Command::Run { scenario } => commands::run(&ctx, &scenario),
        Command::MonteCarlo { scenario, .. } => commands::monte_carlo(&ctx, &scenario),
        Command::CompareLyapunov { scenario } => commands::compare_lyapunov(&ctx, &scenario),
        Command::HocbfSet {
            scenario,
            alpha1,
            resolution,
            x2_max,
            out,
        } => commands::hocbf_set(
            &ctx,
            &HocbfArgs {
                scenario,
                alpha1,
                resolution,
                x2_max,
                out,
            },
        ),
        Command::Validate { scenario, samples } => commands::validate(&ctx, &scenario, samples),
        Command::ListFamilies => commands::families(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
