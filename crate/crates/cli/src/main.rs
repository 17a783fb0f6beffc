//! Command-line pipeline: simulate trials, featurize them, train the
//! subnetwork ensembles and baselines, and emit evaluation curves, ablation
//! grids, and behavioral statistics. Every randomized stage takes an
//! explicit seed and records it in a manifest, so reruns are byte-identical.

mod commands;
mod manifest;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "blankcatch", version, about = "Blanked-ball catching workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic catching trials (one file per subject).
    Simulate(SimulateArgs),
    /// Extract, split, and normalize feature tables from trials.
    Featurize(FeaturizeArgs),
    /// Train LSTM ensembles plus linear and mean baselines.
    Train(TrainArgs),
    /// Error curves for trained models and baselines on the test partition.
    Evaluate(EvaluateArgs),
    /// Feature-ablation matrices for trained models.
    Ablate(AblateArgs),
    /// Full report: curves, ablation grids, and behavioral statistics.
    Report(ReportArgs),
    /// Run simulate, featurize, train, and report end to end.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "out/trials")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    subjects: u32,
    #[arg(long = "trials-per-subject", default_value_t = 135)]
    trials_per_subject: u32,
    /// Disable behavioral noise (pursuit gain 1, zero lag and scatter).
    #[arg(long, default_value_t = false)]
    noiseless: bool,
}

#[derive(Args)]
struct FeaturizeArgs {
    /// Directory produced by `simulate`.
    #[arg(long)]
    trials: PathBuf,
    #[arg(long, default_value = "out/features")]
    out: PathBuf,
    /// Split seed (trial-level 68/12/20).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory produced by `featurize`.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "out/models")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Integration durations in ms, comma separated.
    #[arg(long = "integration-ms", value_delimiter = ',', num_args = 1.., default_values_t = vec![27.0, 53.0, 200.0, 600.0])]
    integration_ms: Vec<f64>,
    /// Prediction distances in frames: a comma list ("1,19,37") or "1-37".
    #[arg(long)]
    horizons: Option<String>,
    /// Reduced profile for quick runs: horizons 1,19,37 and a 200-epoch cap.
    #[arg(long = "desk-mode", default_value_t = false)]
    desk_mode: bool,
    /// Override the maximum number of training epochs.
    #[arg(long = "epochs-cap")]
    epochs_cap: Option<usize>,
    #[arg(long = "ridge-lambda", default_value_t = 1e-6)]
    ridge_lambda: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "out/report")]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "out/report")]
    out: PathBuf,
    /// Prediction distances to ablate at, in ms (nearest frame is used).
    #[arg(long = "horizons-ms", value_delimiter = ',', num_args = 1.., default_values_t = vec![13.0, 267.0, 467.0])]
    horizons_ms: Vec<f64>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    trials: PathBuf,
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "out/report")]
    out: PathBuf,
    /// Prediction distances for ablation grids, in ms.
    #[arg(long = "horizons-ms", value_delimiter = ',', num_args = 1.., default_values_t = vec![13.0, 267.0, 467.0])]
    horizons_ms: Vec<f64>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reduced dataset and training profile (default for this command).
    #[arg(long = "desk-mode", default_value_t = true)]
    desk_mode: bool,
    #[arg(long, default_value_t = 3)]
    subjects: u32,
    #[arg(long = "trials-per-subject", default_value_t = 45)]
    trials_per_subject: u32,
    #[arg(long = "integration-ms", value_delimiter = ',', num_args = 1.., default_values_t = vec![27.0])]
    integration_ms: Vec<f64>,
    #[arg(long = "epochs-cap")]
    epochs_cap: Option<usize>,
    #[arg(long = "ridge-lambda", default_value_t = 1e-6)]
    ridge_lambda: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not usage errors
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::Featurize(args) => commands::featurize(&args),
        Command::Train(args) => commands::train(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::Ablate(args) => commands::ablate(&args),
        Command::Report(args) => commands::report(&args),
        Command::Pipeline(args) => commands::pipeline(&args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<blankcatch_core::Error>()
                .map_or(EXIT_DATA, |core_err| match core_err {
                    blankcatch_core::Error::TrainingDiverged { .. } => EXIT_DIVERGED,
                    _ => EXIT_DATA,
                });
            ExitCode::from(code)
        }
    }
}
