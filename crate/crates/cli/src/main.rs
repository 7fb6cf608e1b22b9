//! `mobound`: train budgeted tree ensembles, certify their risk, audit loss
//! parameters and run complexity and minimax experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric-domain
//! error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mobound_core::{Error, ErrorClass, LossKind, TaskKind};

#[derive(Debug, Parser)]
#[command(name = "mobound", version, about, args_override_self = true)]
struct Cli {
    /// TOML file whose keys are used as flags; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a boosted ensemble of constrained trees.
    Train(TrainArgs),
    /// Compute the risk certificate of a trained model.
    Certify(CertifyArgs),
    /// Search for violations of a loss's self-bounding Lipschitz parameters.
    CheckLoss(CheckLossArgs),
    /// Estimate empirical Rademacher complexity.
    EstimateRad(EstimateRadArgs),
    /// Simulate the minimax lower-bound construction.
    Minimax(MinimaxArgs),
    /// Evaluate the complexity term over a CSV grid of parameters.
    SweepGamma(SweepGammaArgs),
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `multiclass:Q`, `multilabel:Q:K`, `regression:Q` or `binary`;
    /// inferred from the loss and labels when omitted.
    #[arg(long, value_parser = parse_task)]
    pub schema: Option<TaskKind>,
    /// Loss grammar, e.g. `logistic` or `clip(logistic,B=3)`.
    #[arg(long, value_parser = parse_loss)]
    pub loss: LossKind,
    #[arg(long, default_value_t = 50)]
    pub rounds: usize,
    #[arg(long, default_value_t = 2)]
    pub leaves: usize,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau_decay: f64,
    /// Multiplies every line-search step.
    #[arg(long, default_value_t = 0.1)]
    pub shrinkage: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1)]
    pub min_samples_leaf: usize,
    /// Restrict split thresholds to this many quantiles per feature.
    #[arg(long)]
    pub quantiles: Option<usize>,
    /// Stop early on the certified bound at this confidence level.
    #[arg(long)]
    pub certify_delta: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to the layout implied by the model's loss.
    #[arg(long, value_parser = parse_task)]
    pub schema: Option<TaskKind>,
    /// Loss to certify; defaults to the training loss. Must be bounded.
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Leading constant of the compact bound.
    #[arg(long, default_value_t = 1.0)]
    pub c0: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckLossArgs {
    #[arg(long, value_parser = parse_loss)]
    pub loss: LossKind,
    #[arg(long, default_value_t = 10)]
    pub q: usize,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the declared lambda.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Override the declared theta.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("class").required(true).args(["model", "stumps"])))]
pub struct EstimateRadArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_task)]
    pub schema: Option<TaskKind>,
    /// Use the finite class of the model's stage trees and their negations.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Use all stumps with leaf rows in the `l1` ball of radius `--tau`.
    #[arg(long)]
    pub stumps: bool,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 2000)]
    pub draws: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MinimaxArgs {
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub theta: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub q: usize,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepGammaArgs {
    /// CSV with columns n,q,delta,lambda,theta,beta,B,rad_nq.
    #[arg(long)]
    pub grid_file: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numeric => 3,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("MOBOUND_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::InvalidParameter(format!("MOBOUND_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidParameter(format!("cannot configure threads: {e}")))
}

fn run(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Certify(a) => commands::certify(&a),
        Command::CheckLoss(a) => commands::check_loss(&a),
        Command::EstimateRad(a) => commands::estimate_rad(&a),
        Command::Minimax(a) => commands::minimax(&a),
        Command::SweepGamma(a) => commands::sweep_gamma(&a),
    }
}

fn main() -> ExitCode {
    let argv = match config::expand_args(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(e.class()));
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
