//! `wcox`: weighted marginal hazard ratio analyses from the command line.

mod commands;
mod input;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] wcox_core::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use wcox_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::StudyAborted { .. }) => 4,
            CliError::Core(e) if e.is_solver_failure() => 3,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "wcox", version, about = "Propensity-weighted marginal Cox models for multiple treatments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate marginal hazard ratios and write a JSON report.
    Fit(FitArgs),
    /// Weighted Kaplan-Meier curves per treatment group.
    Km(KmArgs),
    /// Standardized mean differences before and after weighting.
    Balance(BalanceArgs),
    /// Binned generalized propensity scores per treatment group.
    PsHist(PsHistArgs),
    /// Run a replicate simulation study.
    Simulate(SimulateArgs),
    /// Monte Carlo true marginal hazard ratios for a scenario.
    Estimand(EstimandArgs),
    /// Observed event rates by time for a scenario.
    EventRates(EventRatesArgs),
    /// Write a synthetic cohort as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CohortArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "time")]
    pub time: String,
    #[arg(long, default_value = "event")]
    pub event: String,
    /// Treatment column (multi-level); conflicts with --z1/--z2.
    #[arg(long, conflicts_with_all = ["z1", "z2"])]
    pub treatment: Option<String>,
    /// First binary factor of a 2x2 factorial treatment.
    #[arg(long, requires = "z2")]
    pub z1: Option<String>,
    #[arg(long, requires = "z1")]
    pub z2: Option<String>,
    /// Comma-separated covariate columns for the propensity model.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Reference treatment label.
    #[arg(long)]
    pub reference: Option<String>,
    /// ipw, ow, att:<label> or unit.
    #[arg(long, default_value = "ow")]
    pub weight_scheme: String,
    /// Drop units whose smallest propensity is below this threshold.
    #[arg(long)]
    pub trim: Option<f64>,
    #[arg(long, default_value_t = 20240101)]
    pub seed: u64,
    /// Record wall-clock duration in the manifest.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    /// robust, model, none or bootstrap:<B>.
    #[arg(long, default_value = "robust")]
    pub variance: String,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KmArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_svg: Option<PathBuf>,
    /// Report cumulative risk alongside survival.
    #[arg(long)]
    pub cumulative: bool,
}

#[derive(Debug, Args)]
pub struct BalanceArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PsHistArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Flat key = value scenario file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// multi3 or factorial.
    #[arg(long)]
    pub setting: Option<String>,
    #[arg(long)]
    pub psi: Option<f64>,
    #[arg(long)]
    pub censoring: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo size for intercept and censoring calibration.
    #[arg(long)]
    pub calibration_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "bootstrap-B", alias = "bootstrap-b")]
    pub bootstrap_b: Option<usize>,
    /// Monte Carlo size of the true-estimand oracle.
    #[arg(long = "M", alias = "m")]
    pub m: Option<usize>,
    /// Every overlap level and censoring rate with 1000 replicates and B = 200.
    #[arg(long)]
    pub full_grid: bool,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_table: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct EstimandArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// ipw, ow or att:<level index>.
    #[arg(long, default_value = "ipw")]
    pub scheme: String,
    #[arg(long = "M", alias = "m", default_value_t = 2_000_000)]
    pub m: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EventRatesArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    pub times: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub size: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Binary-treatment cohort with three planted near-positivity violations.
    #[arg(long)]
    pub poor_overlap: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_threads() {
    if let Ok(v) = std::env::var("WCOX_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size thread pool: {e}");
                }
            }
            _ => log::warn!("ignoring WCOX_THREADS={v}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    init_threads();
    let result = match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Km(a) => commands::km(&a),
        Command::Balance(a) => commands::balance(&a),
        Command::PsHist(a) => commands::ps_hist(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Estimand(a) => commands::estimand(&a),
        Command::EventRates(a) => commands::event_rates(&a),
        Command::Generate(a) => commands::generate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
