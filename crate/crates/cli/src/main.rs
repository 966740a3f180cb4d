//! `ghew`: fit excess-hazard models, predict net survival, emit hazard
//! curves and run simulation studies.
//!
//! Exit codes: 0 success, 1 statistical failure, 2 input error.

mod artifact;
mod commands;
mod output;
mod parse;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ghew", version, about = "Excess-hazard regression with an exponentiated Weibull baseline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one or more hazard structures to a dataset.
    Fit(FitArgs),
    /// Net survival with simulation-based intervals from a fit artifact.
    Netsurv(NetSurvArgs),
    /// Excess-hazard curves on a time grid.
    Curves(CurvesArgs),
    /// Generate one dataset from a scenario.
    Simulate(SimulateArgs),
    /// Run a replicate study from a scenario.
    Study(StudyArgs),
    /// Write the synthetic life table or check a life-table file.
    Lifetable(LifeTableArgs),
}

#[derive(Args)]
pub struct FitArgs {
    /// Dataset file (`time,status,age,year,strata,<covariates...>`).
    #[arg(long)]
    pub data: PathBuf,
    /// Life table (`age,year,sex,rate`).
    #[arg(long)]
    pub life_table: PathBuf,
    /// ph, ah, aft, hh, gh or all; comma-separated or repeated.
    #[arg(long, value_delimiter = ',', default_value = "gh")]
    pub structure: Vec<String>,
    /// Covariates (names or indices) on the time scale of an HH fit.
    #[arg(long, value_delimiter = ',')]
    pub hh_time: Vec<String>,
    /// Covariates (names or indices) on the hazard level of an HH fit.
    #[arg(long, value_delimiter = ',')]
    pub hh_level: Vec<String>,
    /// Hold every time-scale coefficient of a GH fit at this value.
    #[arg(long)]
    pub fix_beta1: Option<f64>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Seed of the restart perturbations.
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    /// Richardson-extrapolated Hessian.
    #[arg(long)]
    pub richardson: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct NetSurvArgs {
    /// Fit artifact written by `ghew fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Covariate pattern, `name=value,...` or values in covariate order.
    #[arg(long, allow_hyphen_values = true)]
    pub pattern: Option<String>,
    /// Dataset whose records form the subgroup.
    #[arg(long)]
    pub subgroup_data: Option<PathBuf>,
    /// Subgroup condition such as `sex=1` or `age>=75`; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    pub filter: Vec<String>,
    /// `start:end:n` or a comma list of times in years.
    #[arg(long)]
    pub times: String,
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output CSV (`time,ns,lower,upper`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CurvesArgs {
    /// Fit artifact written by `ghew fit`.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Covariate pattern for `--fit`; repeatable. Defaults to all zeros.
    #[arg(long, allow_hyphen_values = true)]
    pub pattern: Vec<String>,
    /// Explicit EW baseline `sigma,kappa,alpha`; repeatable.
    #[arg(long)]
    pub baseline: Vec<String>,
    /// `start:end:n` or a comma list of times in years.
    #[arg(long, default_value = "0.005:5:1000")]
    pub grid: String,
    /// Output CSV (`pattern_id,t,hazard`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ScenarioArgs {
    /// Scenario TOML file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named scenario: gh or ch (others need a config file).
    #[arg(long)]
    pub preset: Option<String>,
    /// Override the sample size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Override the seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Replicate index; the dataset equals replicate `i` of a study.
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
    /// Output dataset CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Override the number of replicates.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Candidate structures for AIC selection (default ph,ah,aft,gh).
    #[arg(long, value_delimiter = ',')]
    pub candidates: Vec<String>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Start the true-structure fit from default values, not the truth.
    #[arg(long)]
    pub no_truth_init: bool,
    /// Also write every replicate dataset (always done for one replicate).
    #[arg(long)]
    pub save_datasets: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct LifeTableArgs {
    /// Write the built-in synthetic table.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Parse a table and print its coverage.
    #[arg(long)]
    pub check: Option<PathBuf>,
}

/// 1 for statistical failures, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<commands::StatFailure>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<ghew::Error>() {
            return match e {
                ghew::Error::Study(_)
                | ghew::Error::NoCovariance(_)
                | ghew::Error::NotPositiveSemidefinite { .. }
                | ghew::Error::Initialisation(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(a) => commands::cmd_fit(a),
        Command::Netsurv(a) => commands::cmd_netsurv(a),
        Command::Curves(a) => commands::cmd_curves(a),
        Command::Simulate(a) => commands::cmd_simulate(a),
        Command::Study(a) => commands::cmd_study(a),
        Command::Lifetable(a) => commands::cmd_lifetable(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
