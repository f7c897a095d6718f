use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod error;

#[derive(Debug, Parser)]
#[command(
    name = "lbp",
    version,
    about = "Loopy belief propagation on pairwise Gibbs models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Init {
    Uniform,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    IsingGrid,
}

#[derive(Debug, Args)]
struct Output {
    /// Output format; each command picks a sensible default.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Engine {
    #[arg(long, default_value_t = lbp_core::lbp::DEFAULT_TOLERANCE)]
    tol: f64,
    #[arg(long, default_value_t = lbp_core::lbp::DEFAULT_MAX_ITERS)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate a model file.
    Validate { model: PathBuf },
    /// Run loopy belief propagation.
    Lbp {
        model: PathBuf,
        #[command(flatten)]
        engine: Engine,
        #[arg(long, value_enum, default_value_t = Init::Uniform)]
        init: Init,
        /// Random restarts for fixed-point clustering; 1 disables clustering.
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Exact log-partition function and marginals by enumeration.
    Exact {
        model: PathBuf,
        /// Comma-separated node ids; repeat for several marginals. Defaults to
        /// every single-node marginal.
        #[arg(long, value_delimiter = ',', num_args = 1, action = clap::ArgAction::Append)]
        marginal: Vec<String>,
        #[command(flatten)]
        out: Output,
    },
    /// Dobrushin certificate and rate constant.
    Certify {
        model: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Computation tree: summary, equivalence check or DOT rendering.
    Ctree {
        model: PathBuf,
        #[arg(long)]
        root: String,
        #[arg(long)]
        depth: usize,
        #[arg(long, conflicts_with = "dot")]
        check: bool,
        #[arg(long)]
        dot: bool,
        #[arg(long, value_enum, default_value_t = Init::Uniform)]
        init: Init,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = lbp_core::ctree::DEFAULT_TREE_CAP)]
        max_nodes: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Certificate versus observed LBP behavior over a coupling range.
    Sweep {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long, allow_hyphen_values = true)]
        j_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        j_max: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        h: f64,
        #[command(flatten)]
        engine: Engine,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[command(flatten)]
        out: Output,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
