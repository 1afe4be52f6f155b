use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

pub const BUILD_ID: &str = concat!("fnch ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(name = "fnch", version, about = "Population-size estimation under Fisher's noncentral hypergeometric sampling")]
pub struct Cli {
    /// JSON config for the subcommand (a previous run.json works too); flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel cells and replicates.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log verbosity on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the pmf (or log-pmf) at one or more points.
    Pmf(PmfArgs),
    /// Draw from the two-group distribution.
    Sample(SampleArgs),
    /// Exact-likelihood Metropolis-within-Gibbs posterior.
    FitMcmc(FitArgs),
    /// Likelihood-free Gibbs-ABC posterior over group sizes.
    FitAbc(FitArgs),
    /// Case-study pipeline stages.
    Pipeline(PipelineArgs),
    /// Coverage simulation comparing MCMC and Gibbs-ABC.
    Simulate(SimulateArgs),
    /// Posterior summaries from a draws CSV.
    Summarize(SummarizeArgs),
    /// Plot-ready tables from a pipeline results.json.
    EmitPlots(EmitPlotsArgs),
}

#[derive(Debug, Args)]
pub struct PmfArgs {
    #[arg(long)]
    pub m1: Option<i64>,
    #[arg(long)]
    pub m2: Option<i64>,
    /// Sample total; implied by the composition when --m is used.
    #[arg(long)]
    pub n: Option<i64>,
    /// Odds ratio (two groups) or comma-separated weights (--m).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub w: Vec<f64>,
    #[arg(long = "log-w", value_delimiter = ',', allow_negative_numbers = true)]
    pub log_w: Vec<f64>,
    /// Points to evaluate (two groups), or the composition (--m). Omit for the full table.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub y: Vec<i64>,
    /// Comma-separated group sizes for the multivariate pmf.
    #[arg(long, value_delimiter = ',')]
    pub m: Vec<u64>,
    /// Print the natural-log pmf.
    #[arg(long)]
    pub log: bool,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub m1: u64,
    #[arg(long)]
    pub m2: u64,
    #[arg(long)]
    pub n: u64,
    #[arg(long, allow_negative_numbers = true)]
    pub w: Option<f64>,
    #[arg(long = "log-w", allow_negative_numbers = true)]
    pub log_w: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Per-group ABC thresholds; omit to calibrate (fit-abc only).
    #[arg(long, value_delimiter = ',')]
    pub epsilon: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Step1,
    Step2,
    Step3,
    Sensitivity,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Elicitation {
    MomentMatchedNormal,
    Poisson,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    pub stage: Stage,
    /// Directory or CSV file of cohort tables; defaults to the bundled tables.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long, value_enum)]
    pub elicitation: Option<Elicitation>,
    #[arg(long)]
    pub fix_n: bool,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long)]
    pub n_true: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Skip the Gibbs-ABC arm.
    #[arg(long)]
    pub no_abc: bool,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub level: Option<f64>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmitPlotsArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// One table only (size-posteriors, odds-posteriors, rate-timeseries, sensitivity-overlay).
    #[arg(long)]
    pub kind: Option<String>,
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
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
