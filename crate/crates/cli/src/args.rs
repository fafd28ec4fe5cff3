use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "vaeconf", version, about = "Latent-space confidence scores for VAE regressors")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Optional key=value file; keys are long flag names, command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Print where each configured value came from.
    #[arg(long, short, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset CSV plus a `<name>.meta.csv` sidecar.
    Synth(SynthArgs),
    /// Split by date, fit the scaler and train the model.
    Train(TrainArgs),
    /// Score test observations by distance to reliable training points.
    Score(ScoreArgs),
    /// Correlate scores with absolute errors and report tail MAEs.
    Eval(EvalArgs),
    /// Write latent means, predictions and errors for external plotting.
    ExportLatent(ExportArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    /// Dataset CSV to write; the sidecar goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_train: u64,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_test: u64,
    #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_features: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_clusters: u64,
    /// Share of test rows from clusters absent in training.
    #[arg(long, default_value_t = 0.3)]
    pub shifted_fraction: f64,
    /// Target noise std for in-distribution clusters.
    #[arg(long, default_value_t = 5.0)]
    pub noise_low: f64,
    /// Target noise std for shifted clusters.
    #[arg(long, default_value_t = 80.0)]
    pub noise_high: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActivationArg {
    Tanh,
    Softplus,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Last training date (inclusive), YYYY-MM-DD.
    #[arg(long, default_value = "2020-12-31")]
    pub cutoff: NaiveDate,
    #[arg(long)]
    pub model_out: PathBuf,
    /// Per-epoch loss CSV [default: <model-out stem>.history.csv]
    #[arg(long)]
    pub history_out: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch_size: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Weight of the KL term.
    #[arg(long, default_value_t = 1e-3)]
    pub kl_weight: f64,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub latent_dim: u64,
    /// Comma-separated encoder hidden widths.
    #[arg(long, default_value = "64,32", value_delimiter = ',')]
    pub encoder_hidden: Vec<usize>,
    /// Comma-separated decoder hidden widths.
    #[arg(long, default_value = "32,64", value_delimiter = ',')]
    pub decoder_hidden: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ActivationArg::Tanh)]
    pub activation: ActivationArg,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Keep raw feature values (identity scaler).
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SpaceArg {
    Latent,
    Feature,
    Geo,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReferenceArg {
    /// Training rows with error at most T.
    Reliable,
    /// Every training row.
    All,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset CSV holding both train and test rows.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "2020-12-31")]
    pub cutoff: NaiveDate,
    #[arg(long, value_enum, default_value_t = SpaceArg::Latent)]
    pub space: SpaceArg,
    /// Number of nearest reference points.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,
    #[arg(long, value_enum, default_value_t = ReferenceArg::Reliable)]
    pub reference: ReferenceArg,
    /// Scoring threads; output does not depend on it.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: u64,
    /// Score CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the labeled test latent CSV used by `eval --labels`.
    #[arg(long)]
    pub latent_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    /// Score CSV(s) from `score`; repeat for sweeps.
    #[arg(long, required = true)]
    pub scores: Vec<PathBuf>,
    /// Latent export of the labeled test rows (needs target and abs_error columns).
    #[arg(long)]
    pub labels: PathBuf,
    /// Tail fraction for the reliable/unreliable MAEs, in (0, 0.5].
    #[arg(long, default_value_t = 0.2)]
    pub fraction: f64,
    /// key=value report file [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV with one row per score file.
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum SplitArg {
    All,
    Train,
    Test,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset CSV; the target column is optional.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
    #[arg(long, default_value = "2020-12-31")]
    pub cutoff: NaiveDate,
}
