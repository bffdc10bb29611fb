use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "relshare",
    version,
    about = "Relaxed parameter sharing for recurrent sequence models"
)]
pub struct Cli {
    /// Worker threads for parallel runs (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log progress (-v) or details (-vv) to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic drifting-weights tasks.
    Synth(SynthArgs),
    /// Resample, impute, encode and split a raw observation file.
    Prepare(PrepareArgs),
    /// Train one model or run a random search.
    Train(TrainArgs),
    /// Score a model on a test set.
    Eval(EvalArgs),
    /// Saliency maps and permutation importance.
    Explain(ExplainArgs),
    /// Run a named experiment suite.
    Reproduce(ReproduceArgs),
}

/// Options shared by every command.
#[derive(Debug, Args)]
pub struct Common {
    /// JSON config; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (defaults to $RELSHARE_OUT/<command>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated shift strengths, or `all` for 0.0..0.4.
    #[arg(long)]
    pub delta: Option<String>,
    /// Weight schedules per delta.
    #[arg(long)]
    pub schedules: Option<usize>,
    #[arg(long = "T")]
    pub t_len: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Label sequences by whether the last target exceeds the training median.
    #[arg(long)]
    pub classify: bool,
    /// Z-score inputs with training statistics.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Raw observation file (JSON Lines).
    #[arg(long)]
    pub raw: Option<PathBuf>,
    /// Train/validation/test fractions, e.g. 0.7,0.15,0.15.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory holding train.jsonl and val.jsonl.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// nn, nn_t, lstm, lstm_t, lstm_te, shift (shift_lstm) or mix (mix_lstm).
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Stacked LSTM layers (plain lstm only).
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub layer_norm: bool,
    /// Search space, e.g. hidden=100,150,300;lr=0.001,0.01
    #[arg(long)]
    pub sweep: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Test file, or a directory holding test.jsonl.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Bootstrap resamples (0 for point estimates only).
    #[arg(long)]
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplainMode {
    Gradient,
    Permutation,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Data file, or a directory holding test.jsonl.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ExplainMode>,
    /// Permutation window length in steps.
    #[arg(long)]
    pub window: Option<usize>,
    /// Correlation threshold for grouping features.
    #[arg(long)]
    pub corr: Option<f64>,
    /// Class whose score is differentiated.
    #[arg(long)]
    pub target_class: Option<u8>,
    /// Permutation draws averaged per cell.
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[command(flatten)]
    pub common: Common,
    /// fig1a, fig1b, fig2, fig3 or fig4.
    #[arg(long)]
    pub suite: Option<String>,
    /// Repetitions per cell.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Comma-separated shift strengths.
    #[arg(long)]
    pub deltas: Option<String>,
    /// Comma-separated training-set sizes.
    #[arg(long)]
    pub train_sizes: Option<String>,
}
