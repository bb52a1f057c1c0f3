//! `adascope` command-line front end.
//!
//! Stage verbs share one output directory: `train-family` writes `family/`,
//! `encode` writes `encoding.{json,bin}`, `train-as` reads both and writes
//! `scope.{json,bin}`, which `predict-as` routes with. Splits and stage
//! seeds are derived from `--seed` exactly as `pipeline` derives them.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use adascope::models::Architecture;
use adascope::scope::{Eta, Modalities};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "adascope",
    version,
    about = "Per-node depth selection for graph neural networks"
)]
struct Cli {
    /// Run seed; selects the split and every initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "adascope-out")]
    out: PathBuf,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArg {
    /// Dataset manifest; overrides the data source of `--config`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a CSBM graph and write it in the dataset format.
    GenerateCsbm {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Parse and validate a dataset, then print a summary.
    IngestCheck(DataArg),
    /// Train a single classifier.
    TrainGnn {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        arch: Option<Architecture>,
        #[arg(long, default_value_t = 2)]
        depth: usize,
    },
    /// Train classifiers at every depth up to `--lmax`.
    TrainFamily {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        lmax: Option<usize>,
        #[arg(long)]
        arch: Option<Architecture>,
    },
    /// Compute the structural encoding.
    Encode {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        lmax: Option<usize>,
    },
    /// Record which depths classify each training and validation node.
    BuildLabels(DataArg),
    /// Train the depth predictor.
    TrainAs {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        eta: Option<Eta>,
        /// Comma-separated subset of xi,x,zeta.
        #[arg(long)]
        inputs: Option<Modalities>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Route test nodes with the trained predictor.
    PredictAs(DataArg),
    /// Oracle accuracy curve of the trained family, optionally against an
    /// ensemble of replicated best-depth models.
    Oracle {
        #[command(flatten)]
        data: DataArg,
        /// Largest ensemble; 0 skips the baseline.
        #[arg(long, default_value_t = 0)]
        ensemble: usize,
    },
    /// Run the full experiment for every configured seed.
    Pipeline {
        #[command(flatten)]
        data: DataArg,
        /// Comma-separated run seeds; overrides the configuration.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Per-subgroup generalization gap across depths on a CSBM.
    TheoryCheck {
        #[arg(long)]
        spec: PathBuf,
        /// Inclusive depth range `lo:hi`.
        #[arg(long, default_value = "1:6")]
        lrange: String,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long, default_value_t = 0.5)]
        train_fraction: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
