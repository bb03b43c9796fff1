//! Command-line surface: trace ingestion and fitting, synthetic data and
//! study grids, misclassification probability tables, and fit scoring.

mod commands;
mod report;
mod trace;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "stepmix",
    version,
    about = "Classify stepwise-decreasing intensity profiles into four structural clusters \
             via a shared-jump Gaussian mixture"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the mixture to a trace CSV and write a JSON report.
    ///
    /// Exits 0 on convergence, 2 when the iteration cap was reached (the
    /// report is still written), and 1 on input errors.
    Fit(FitArgs),
    /// Generate a synthetic dataset (--design) or run a study grid (--study).
    Simulate(SimulateArgs),
    /// Tabulate the probability of classifying a double-jump profile into
    /// the two-jump cluster, on a (delta, n_m) grid.
    Theory(TheoryArgs),
    /// Score a fit report against a ground-truth file.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct FitArgs {
    /// Trace CSV with header profile_id,t,intensity
    #[arg(long)]
    pub input: PathBuf,
    /// Output JSON report path
    #[arg(long)]
    pub out: PathBuf,
    /// Number of random initializations (default 10)
    #[arg(long = "nb-init")]
    pub nb_init: Option<usize>,
    /// Conditional-maximization sweeps per iteration (default 1)
    #[arg(long = "nb-m-step")]
    pub nb_m_step: Option<usize>,
    /// Maximum EM iterations per start (default 100)
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// Relative log-likelihood convergence tolerance (default 1e-8)
    #[arg(long)]
    pub tol: Option<f64>,
    /// RNG seed (default 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pin the jump height instead of estimating it
    #[arg(long = "fix-delta", allow_hyphen_values = true)]
    pub fix_delta: Option<f64>,
    /// JSON config file; flags take precedence over it
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Study grid to run: 1, 2, or 3
    #[arg(long)]
    pub study: Option<u8>,
    /// Restrict the study to cells matching this key=value list,
    /// e.g. "delta=-5,type=(10,1)"
    #[arg(long, allow_hyphen_values = true)]
    pub cell: Option<String>,
    /// Replicates per cell (default 30)
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Noise standard deviation override for study cells (default 1)
    #[arg(long)]
    pub sigma: Option<f64>,
    /// One-shot design, e.g. "S=4,n=50,delta=-5,sigma=1e-9"
    #[arg(long, allow_hyphen_values = true)]
    pub design: Option<String>,
    /// RNG seed (default 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV (data for --design, tidy metrics for --study); stdout
    /// when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the ground truth of a --design dataset to this CSV
    #[arg(long = "truth-out")]
    pub truth_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TheoryArgs {
    /// Profile length
    #[arg(long)]
    pub n: usize,
    /// True noise standard deviation of the double-jump profile
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Comma-separated jump heights, e.g. "-0.5,-1,-2,-3"
    #[arg(long = "delta-grid", allow_hyphen_values = true)]
    pub delta_grid: String,
    /// Comma-separated overlap segment lengths, e.g. "2,5,10,20"
    #[arg(long = "nm-grid")]
    pub nm_grid: String,
    /// Add a Monte-Carlo column with this many draws
    #[arg(long)]
    pub mc: Option<usize>,
    /// RNG seed for the Monte-Carlo column (default 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Fit report JSON produced by `stepmix fit`
    #[arg(long = "fit")]
    pub fit: PathBuf,
    /// Ground-truth CSV (schema of `stepmix simulate --truth-out`)
    #[arg(long)]
    pub truth: PathBuf,
    /// Output CSV; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Cap the worker pool from STEPMIX_THREADS; outputs do not depend on the
/// worker count, only wall time does.
fn init_thread_pool() {
    if let Ok(raw) = std::env::var("STEPMIX_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring STEPMIX_THREADS={raw}; expected a positive integer"),
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version are not errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    init_thread_pool();

    let outcome = match &cli.command {
        Command::Fit(args) => commands::cmd_fit(args),
        Command::Simulate(args) => commands::cmd_simulate(args),
        Command::Theory(args) => commands::cmd_theory(args),
        Command::Report(args) => commands::cmd_report(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
