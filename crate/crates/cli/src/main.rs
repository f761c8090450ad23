//! `netference`: simulate network data, estimate main and spillover effects,
//! compute analytic biases, check balance and run replication studies.
//!
//! Every option can also be set in a `key = value` file passed with
//! `--config` (keys are the long flag names with `_` for `-`); flags win.
//! `NETFERENCE_THREADS` sets the worker count.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 estimation
//! error, 4 inference error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use netference::Error;

use config::{Floats, List, Settings};

#[derive(Parser)]
#[command(name = "netference", version, about = "Main and spillover effects on observational network data")]
struct Cli {
    /// Key-value config file, or a manifest.json from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic network, treatments and outcomes for a scenario.
    Simulate(SimulateArgs),
    /// Estimate effects from files or from a simulated draw.
    Estimate(EstimateArgs),
    /// Analytic bias of interference-naive estimators for three adjustment sets.
    Bias(BiasArgs),
    /// Covariate balance across individual, neighborhood and joint treatment arms.
    Balance(BalanceArgs),
    /// Monte Carlo bias and RMSE over an estimator grid.
    Replicate(ReplicateArgs),
}

/// Synthetic population and scenario.
#[derive(Args, Clone, Default)]
pub struct PopulationArgs {
    /// Scenario 1-4.
    #[arg(long)]
    pub scenario: Option<u8>,
    /// low, medium or high.
    #[arg(long)]
    pub interference: Option<String>,
    /// Outcome model: model1 (main effect) or model2 (spillover).
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub degree_target: Option<f64>,
    #[arg(long)]
    pub grade_weight: Option<f64>,
    #[arg(long)]
    pub race_weight: Option<f64>,
    #[arg(long)]
    pub network_seed: Option<u64>,
    /// Seed of the draws that calibrate the true neighborhood law.
    #[arg(long)]
    pub calibration_seed: Option<u64>,
    /// top_k:<k>, count_all, proportion_all or weighted_sum.
    #[arg(long)]
    pub exposure: Option<String>,
    /// Sweep limit of the scenario-4 assignment iteration.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Seed of treatment and outcome draws.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replicate index within the seed.
    #[arg(long)]
    pub replicate: Option<u64>,
}

/// Observed data; a simulated draw is used when neither `units` nor
/// `edges` is given.
#[derive(Args, Clone, Default)]
pub struct DataArgs {
    /// Unit table with y, z, g and trials columns plus covariates.
    #[arg(long)]
    pub units: Option<PathBuf>,
    /// Edge list; requires `covariates`.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Node table holding covariates, treatment and outcome.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Ranked friend lists for top-k exposures.
    #[arg(long)]
    pub ranked: Option<PathBuf>,
    #[arg(long)]
    pub y_column: Option<String>,
    #[arg(long)]
    pub z_column: Option<String>,
    /// Columns whose neighbor means (and the degree) are added as covariates.
    #[arg(long)]
    pub neighbor_means: Option<List>,
}

#[derive(Args, Clone, Default)]
pub struct EstimatorArgs {
    /// subclass_gps, gps, diff_means, ols or subclass_phi.
    #[arg(long)]
    pub estimator: Option<String>,
    /// Individual-score covariates (comma separated).
    #[arg(long)]
    pub x_z: Option<List>,
    /// Neighborhood-score covariates (comma separated).
    #[arg(long)]
    pub x_g: Option<List>,
    #[arg(long)]
    pub subclasses: Option<usize>,
    #[arg(long)]
    pub min_arm_count: Option<usize>,
    /// Exposure levels to report (comma separated, starting at 0).
    #[arg(long)]
    pub g_grid: Option<Floats>,
    /// linear, cubic, no_gps or saturated.
    #[arg(long)]
    pub outcome_model: Option<String>,
    /// population or within_admissible.
    #[arg(long)]
    pub g_mass: Option<String>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub population: PopulationArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub population: PopulationArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Bootstrap replications; 0 skips the bootstrap.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// unit or cluster.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub bootstrap_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct BiasArgs {
    #[command(flatten)]
    pub population: PopulationArgs,
    /// Interference levels (comma separated).
    #[arg(long)]
    pub levels: Option<List>,
    /// Draws averaged per level.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Outcome column the formulas average: mu (structural mean) or y.
    #[arg(long)]
    pub outcome_column: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct BalanceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub population: PopulationArgs,
    #[arg(long)]
    pub x_z: Option<List>,
    #[arg(long)]
    pub x_g: Option<List>,
    /// Quantile strata per score.
    #[arg(long)]
    pub strata: Option<usize>,
    /// Smallest joint arm included in the joint balance.
    #[arg(long)]
    pub min_arm_size: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReplicateArgs {
    #[command(flatten)]
    pub population: PopulationArgs,
    /// Scenarios to run (comma separated).
    #[arg(long)]
    pub scenarios: Option<List>,
    #[arg(long)]
    pub levels: Option<List>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub subclasses: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Estimation(_) | Error::RankDeficient { .. } => 3,
        Error::Inference(_) => 4,
        _ => 2,
    }
}

fn set_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("NETFERENCE_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("NETFERENCE_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), Error> {
    set_threads()?;
    let mut s = Settings::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Simulate(a) => commands::simulate_cmd(&mut s, a),
        Command::Estimate(a) => commands::estimate_cmd(&mut s, a),
        Command::Bias(a) => commands::bias_cmd(&mut s, a),
        Command::Balance(a) => commands::balance_cmd(&mut s, a),
        Command::Replicate(a) => commands::replicate_cmd(&mut s, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
