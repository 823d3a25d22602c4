//! `dissipnet`: solve, check, sweep, optimize, and certify dissipative
//! flow network instances described by strict TOML files.
//!
//! Exit codes: 0 ok/feasible, 2 infeasible, 3 numerical failure, 4 usage.

mod commands;
mod format;
mod report;

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{CommandError, EXIT_USAGE};
use format::Model;
use report::Format;

#[derive(Debug, Parser)]
#[command(
    name = "dissipnet",
    version,
    about = "Steady states and robust operation of dissipative flow networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    /// Aligned human-readable tables
    Text,
    /// Versioned JSON records
    Records,
}

impl From<FormatArg> for Format {
    fn from(arg: FormatArg) -> Format {
        match arg {
            FormatArg::Text => Format::Text,
            FormatArg::Records => Format::Records,
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    /// Override the solver's gradient tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Override the solver's iteration budget
    #[arg(long)]
    max_iter: Option<usize>,
    /// Output format
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one scenario and report the steady state, cost, and bounds
    Solve {
        file: PathBuf,
        /// lower | upper | comma-separated withdrawals per internal node
        #[arg(long, default_value = "upper", allow_hyphen_values = true)]
        scenario: String,
        #[command(flatten)]
        common: Common,
    },
    /// Decide feasibility over the whole withdrawal box from two corner solves
    Check {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Solve every point of a withdrawal lattice and tabulate the results
    Sweep {
        file: PathBuf,
        /// Grid points per withdrawal dimension
        #[arg(long, default_value_t = 11)]
        resolution: usize,
        /// Cap on the total number of lattice solves
        #[arg(long)]
        budget: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Search the decision boxes for the cheapest robust-feasible point
    Optimize {
        file: PathBuf,
        /// Cap on feasibility evaluations
        #[arg(long)]
        budget: Option<usize>,
        /// Random seed for the search probes
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Produce a flow-dominance path from a terminal to the given node
    Certify {
        file: PathBuf,
        /// Target node id (must not be a terminal)
        #[arg(long)]
        node: usize,
        /// Two scenario specs joined by a colon; the first must dominate
        #[arg(long, default_value = "upper:lower")]
        scenarios: String,
        #[command(flatten)]
        common: Common,
    },
    /// Re-emit a parsed instance file in canonical form
    Export { file: PathBuf },
}

#[cfg(feature = "parallel")]
fn init_worker_pool() -> Result<(), String> {
    use std::env::VarError;
    match std::env::var("DISSIPNET_THREADS") {
        Err(VarError::NotPresent) => Ok(()),
        Err(e) => Err(format!("DISSIPNET_THREADS is unreadable: {e}")),
        Ok(raw) => {
            let workers: usize = raw
                .parse()
                .map_err(|_| format!("DISSIPNET_THREADS must be a worker count, got {raw:?}"))?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build_global()
                .map_err(|e| e.to_string())
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn init_worker_pool() -> Result<(), String> {
    // Sequential build: the worker-count override has nothing to configure.
    Ok(())
}

fn load(path: &Path, common: Option<&Common>) -> Result<Model, CommandError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CommandError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let (_, mut model) = format::parse(&text)
        .map_err(|e| CommandError::Usage(format!("{}: {e}", path.display())))?;
    if let Some(common) = common {
        if let Some(tol) = common.tol {
            model.solver.tolerance = Some(tol);
        }
        if let Some(max_iter) = common.max_iter {
            model.solver.max_iterations = max_iter;
        }
        model.search.solver = model.solver.clone();
    }
    Ok(model)
}

fn dispatch(command: &Command) -> Result<(String, i32), CommandError> {
    match command {
        Command::Solve { file, scenario, common } => {
            let model = load(file, Some(common))?;
            commands::solve(&model, scenario, common.format.into())
        }
        Command::Check { file, common } => {
            let model = load(file, Some(common))?;
            commands::check(&model, common.format.into())
        }
        Command::Sweep { file, resolution, budget, common } => {
            let model = load(file, Some(common))?;
            commands::sweep(&model, *resolution, *budget, common.format.into())
        }
        Command::Optimize { file, budget, seed, common } => {
            let model = load(file, Some(common))?;
            commands::optimize(&model, *budget, *seed, common.format.into())
        }
        Command::Certify { file, node, scenarios, common } => {
            let model = load(file, Some(common))?;
            commands::certify(&model, *node, scenarios, common.format.into())
        }
        Command::Export { file } => {
            let text = std::fs::read_to_string(file)
                .map_err(|e| CommandError::Usage(format!("cannot read {}: {e}", file.display())))?;
            let (parsed, _) = format::parse(&text)
                .map_err(|e| CommandError::Usage(format!("{}: {e}", file.display())))?;
            Ok(commands::export(&parsed))
        }
    }
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let explicit_display =
                matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if explicit_display { 0 } else { EXIT_USAGE };
        }
    };
    if let Err(message) = init_worker_pool() {
        eprintln!("error: {message}");
        return EXIT_USAGE;
    }
    match dispatch(&cli.command) {
        Ok((mut output, code)) => {
            if !output.ends_with('\n') {
                output.push('\n');
            }
            print!("{output}");
            code
        }
        Err(error) => {
            eprintln!("error: {}", error.message());
            error.exit_code()
        }
    }
}

fn main() {
    std::process::exit(run());
}
