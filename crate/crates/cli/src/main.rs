//! `pf`: solve, sweep, baselines, verification and reports for the discrete
//! privacy funnel.
//!
//! Exit codes: 0 success, 1 bad input file, 2 bad flags, 3 iteration cap
//! reached, 4 exhaustive enumeration guard, 5 failed verification check.

mod commands;
mod overrides;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "pf",
    version,
    about = "Privacy funnel solvers on discrete distributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the DCA solver once and write the result as JSON.
    Solve(SolveArgs),
    /// Run the (beta, alpha, |Z|, restart) grid and write CSV, JSON and the frontier.
    Sweep(SweepArgs),
    /// Greedy merging and exhaustive partitions in the sweep CSV schema.
    Baseline(BaselineArgs),
    /// Run every numerical check and write JSON lines.
    Verify(VerifyArgs),
    /// Merge result files into one frontier and a dominance summary.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct DistArgs {
    /// Joint distribution JSON: {"p_x": [...], "p_y_given_x": [[...], ...]}.
    #[arg(long)]
    dist: PathBuf,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    dist: DistArgs,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long = "card-z", default_value_t = 3)]
    card_z: usize,
    /// Penalty exponent: 2 for ridge, 1 for the log-domain L1 solver.
    #[arg(long, default_value = "2")]
    q: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Extra settings as key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    dist: DistArgs,
    /// CSV output; `<out>.frontier.csv`, `<out>.json` and
    /// `<out>.defects.json` are written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "2")]
    q: String,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated output cardinalities.
    #[arg(long = "card-z")]
    card_z: Option<String>,
    /// Single-point beta grid.
    #[arg(long, conflicts_with = "beta_grid")]
    beta: Option<f64>,
    /// Single-point alpha grid.
    #[arg(long, conflicts_with = "alpha_grid")]
    alpha: Option<f64>,
    /// `lo:hi:n` geometric grid or a comma-separated list.
    #[arg(long = "beta-grid")]
    beta_grid: Option<String>,
    #[arg(long = "alpha-grid")]
    alpha_grid: Option<String>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Frontier bin width in bits.
    #[arg(long = "bin-width", default_value_t = pf_core::sweep::DEFAULT_BIN_WIDTH_BITS)]
    bin_width: f64,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineMode {
    Greedy,
    Exhaustive,
    Both,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[command(flatten)]
    dist: DistArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = BaselineMode::Both)]
    mode: BaselineMode,
    /// Trade-off multiplier for the greedy merge criterion.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    dist: DistArgs,
    /// JSON-lines report; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replace every check's tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Also run both solvers once (beta = alpha = 1, |Z| = 3) and audit
    /// their descent.
    #[arg(long)]
    audit: bool,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Frontier CSV; the dominance summary goes to `<out>.dominance.json`.
    #[arg(long)]
    out: PathBuf,
    /// Tolerance in bits when matching baseline points.
    #[arg(long, default_value_t = 0.01)]
    slack: f64,
    #[arg(long = "bin-width", default_value_t = pf_core::sweep::DEFAULT_BIN_WIDTH_BITS)]
    bin_width: f64,
    /// Sweep or baseline outputs (CSV, or the JSON mirror).
    inputs: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                commands::EXIT_USAGE
            } else {
                0
            });
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Verify(a) => commands::verify(a),
        Command::Report(a) => commands::report(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {:#}", e.source);
            ExitCode::from(e.code)
        }
    }
}
