//! Command-line surface.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

const ARCH_GRAMMAR: &str = "\
ARCHITECTURE STRINGS
  MLP shorthand:  dense:784-128-64-10[,relu][,softmax]
      a dense chain over the unit counts; `relu` inserts activations
      between layers (not after the last one)
  Layer list:     input:1x28x28,conv:8x3x3s1p1,relu,pool:2,flatten,dense:10
      tokens: input:SHAPE  dense:N  conv:OCxKHxKW[sN][pN]  pool:W[sN]
              relu  flatten  softmax
      dense/conv input widths are inferred from the running shape";

#[derive(Debug, Parser)]
#[command(
    name = "compresslab",
    version,
    about = "Model compression lab: pruning, knowledge distillation, and reproducible sweeps",
    after_long_help = ARCH_GRAMMAR
)]
pub struct Cli {
    /// Default seed for anything stochastic that has no explicit seed flag.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Output directory; every file the run produces lands here.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Suppress informational logging (errors still print).
    #[arg(long, global = true)]
    pub quiet: bool,

    /// Reproducible outputs: report timestamps and wall_ms fields are
    /// zeroed so fixed-seed runs are byte-identical. Meant for regression
    /// goldens.
    #[arg(long, global = true)]
    pub canonical: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network from scratch and save it as NNCM.
    Train(TrainArgs),
    /// Prune a trained model: mask, optional cascade, optional fine-tune.
    Prune(PruneArgs),
    /// Distill a teacher model into a smaller student.
    Distill(DistillArgs),
    /// Knowledge distillation followed by a pruning sweep (the full
    /// compression pipeline), emitting CSV/JSON records.
    Pipeline(PipelineArgs),
    /// Evaluate a model's top-1 accuracy on a dataset.
    Eval(EvalArgs),
    /// Turn emitted records into plot-ready curves.
    Report(ReportArgs),
}

/// Where examples come from. Synthetic generators are seeded and pure.
#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Dataset source: blobs | idx | cifar
    #[arg(long, default_value = "blobs")]
    pub dataset: String,

    /// IDX image file (MNIST family), with --idx-labels.
    #[arg(long)]
    pub idx_images: Option<PathBuf>,

    /// IDX label file.
    #[arg(long)]
    pub idx_labels: Option<PathBuf>,

    /// CIFAR-10 binary batch file; repeat for several batches.
    #[arg(long)]
    pub cifar_batch: Vec<PathBuf>,

    /// Blob generator: number of classes.
    #[arg(long, default_value_t = 4)]
    pub classes: usize,

    /// Blob generator: examples per class.
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,

    /// Blob generator: input dimensionality.
    #[arg(long, default_value_t = 16)]
    pub dims: usize,

    /// Blob generator: distance between cluster centers (unit variance).
    #[arg(long, default_value_t = 6.0)]
    pub separation: f64,

    /// Seed for synthetic data and the train/validation split
    /// (defaults to the global --seed).
    #[arg(long)]
    pub data_seed: Option<u64>,

    /// Train fraction of the train/validation split.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Architecture string (see --help for the grammar).
    #[arg(long)]
    pub arch: String,

    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value_t = 5)]
    pub epochs: usize,

    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,

    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,

    /// Keep the example order fixed instead of shuffling each epoch.
    #[arg(long)]
    pub no_shuffle: bool,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    /// Trained NNCM model to prune.
    #[arg(long)]
    pub model: PathBuf,

    /// Pruning strategy: random | class_uniform | class_blind
    #[arg(long, default_value = "class_blind")]
    pub strategy: String,

    /// Fraction of prunable weights to remove, in [0, 1].
    #[arg(long)]
    pub fraction: f64,

    /// Also remove outgoing weights of units whose inputs all died.
    #[arg(long)]
    pub cascade: bool,

    /// Fine-tuning epochs after masking (0 disables fine-tuning).
    #[arg(long, default_value_t = 0)]
    pub fine_tune_epochs: usize,

    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,

    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,

    /// Dataset for fine-tuning and accuracy measurement. Optional when only
    /// masking and counting.
    #[command(flatten)]
    pub data: DataArgs,

    /// Skip dataset loading, evaluation and fine-tuning entirely.
    #[arg(long)]
    pub no_data: bool,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    /// Trained teacher model (NNCM).
    #[arg(long)]
    pub teacher: PathBuf,

    /// Student architecture string.
    #[arg(long)]
    pub student_arch: String,

    #[arg(long, default_value_t = compresslab::distill::DEFAULT_TEMPERATURE)]
    pub temperature: f64,

    /// Weight of the hard-label loss; 0 is pure teacher mimicry.
    #[arg(long, default_value_t = compresslab::distill::DEFAULT_ALPHA)]
    pub alpha: f64,

    #[arg(long, default_value_t = 5)]
    pub epochs: usize,

    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,

    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,

    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Flat TOML config file; flags below override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Trained teacher model path (alternative: --teacher-arch).
    #[arg(long)]
    pub teacher_model: Option<PathBuf>,

    /// Teacher architecture to train from scratch before distilling.
    #[arg(long)]
    pub teacher_arch: Option<String>,

    /// Epochs for teacher training when --teacher-arch is used.
    #[arg(long)]
    pub teacher_epochs: Option<usize>,

    #[arg(long)]
    pub student_arch: Option<String>,

    #[arg(long)]
    pub temperature: Option<f64>,

    #[arg(long)]
    pub alpha: Option<f64>,

    #[arg(long)]
    pub distill_epochs: Option<usize>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub learning_rate: Option<f64>,

    #[arg(long)]
    pub momentum: Option<f64>,

    /// Comma-separated strategies, e.g. class_blind,random
    #[arg(long)]
    pub strategies: Option<String>,

    /// Comma-separated ascending fractions, e.g. 0.2,0.4,0.6
    #[arg(long)]
    pub fractions: Option<String>,

    #[arg(long)]
    pub repeats: Option<u32>,

    #[arg(long)]
    pub cascade: Option<bool>,

    #[arg(long)]
    pub fine_tune_epochs: Option<usize>,

    /// Fine-tuning learning rate (default: half the training rate).
    #[arg(long)]
    pub fine_tune_lr: Option<f64>,

    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// NNCM model to evaluate.
    #[arg(long)]
    pub model: PathBuf,

    #[command(flatten)]
    pub data: DataArgs,

    /// Evaluate on the full dataset instead of the validation part.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Records file produced by `pipeline` (JSON bundle, or the CSV).
    #[arg(long)]
    pub records: PathBuf,

    /// Strategy to plot: random | class_uniform | class_blind
    #[arg(long)]
    pub strategy: String,

    /// Y field: accuracy | effective_params | cascaded_extra |
    /// total_compression | wall_ms
    #[arg(long, default_value = "accuracy")]
    pub field: String,
}
