use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod error;

use error::CliError;

/// Planning, control and simulation for cable-suspended payload transport.
///
/// Exit codes: 0 success, 2 infeasible problem (no path, seed infeasible,
/// margins unmet, diverged run), 3 input error, 4 internal fault.
/// CABLETRANS_THREADS sets the worker thread count.
#[derive(Debug, Parser)]
#[command(name = "cabletrans", version)]
struct Cli {
    /// More log output on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a signed distance field and cache it.
    Map(commands::MapArgs),
    /// Search, seed and optimize a trajectory between two points.
    Plan(commands::PlanArgs),
    /// Run a closed-loop simulation scenario.
    Sim(commands::SimArgs),
    /// Target-ring benchmark, scaling study and cable-band ablation.
    Bench(commands::BenchArgs),
    /// Finite-difference check of every cost term's gradient.
    Gradcheck(commands::GradcheckArgs),
    /// Replan mid-flight to a new goal and report switch continuity.
    Replan(commands::ReplanArgs),
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("CABLETRANS_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| CliError::Input(format!("CABLETRANS_THREADS: not a count: '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are input errors; help and version are not errors
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    let result = init_threads().and_then(|_| match cli.command {
        Command::Map(a) => commands::map(a),
        Command::Plan(a) => commands::plan(a),
        Command::Sim(a) => commands::sim(a),
        Command::Bench(a) => commands::bench(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Replan(a) => commands::replan(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

/// Parent directory of a file argument, for resolving relative paths.
pub(crate) fn base_dir(path: &std::path::Path) -> Option<PathBuf> {
    path.parent().map(|p| p.to_path_buf())
}
