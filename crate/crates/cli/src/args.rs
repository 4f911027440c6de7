use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Image restoration toolkit: dataset preparation, transformer training,
/// enhancement, evaluation, and gradient verification.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error,
/// 4 numeric-check failure.
#[derive(Parser, Debug)]
#[command(name = "murk", version, max_term_width = 100)]
pub struct Cli {
    /// Master seed for every stochastic choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Flat `key = value` config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,

    /// Thread-pool size for parallel per-image work (prepare, enhance)
    /// and kernel internals; 1 forces fully serial execution. Defaults
    /// to the core count. Outputs are identical regardless.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Pair, equalize, smooth, rotate-augment, and split a raw dataset.
    Prepare(PrepareArgs),
    /// Generate a paired fixture dataset from synthetic or supplied clean images.
    Synth(SynthArgs),
    /// Train a model from scratch on prepared data.
    Pretrain(TrainArgs),
    /// Continue training from a checkpoint (underwater by default).
    Finetune(FinetuneArgs),
    /// Restore images with a trained model or a classical method.
    Enhance(EnhanceArgs),
    /// Score methods on a test split (PSNR/SSIM/time).
    Eval(EvalArgs),
    /// Verify analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Raw dataset root holding corrupted/ and clean/ subdirectories.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for prepared images and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Which pair members receive 3x3 smoothing: clean|both|none.
    #[arg(long)]
    pub smooth: Option<String>,
    /// Smoothing kernel: box|gaussian.
    #[arg(long)]
    pub smooth_kind: Option<String>,
    /// Fraction of base pairs assigned to the training split.
    #[arg(long)]
    pub train_frac: Option<f64>,
    /// Output codec: png|ppm.
    #[arg(long)]
    pub ext: Option<String>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Corruption to synthesize: underwater|noise|rain|downscale.
    #[arg(long)]
    pub kind: String,
    /// Number of pairs to generate.
    #[arg(long)]
    pub n: Option<usize>,
    /// Output dataset root (corrupted/ + clean/ layout).
    #[arg(long)]
    pub out: PathBuf,
    /// Clean-image size as WxH (used when generating synthetic cleans).
    #[arg(long)]
    pub size: Option<String>,
    /// Optional directory of user-supplied clean images.
    #[arg(long)]
    pub src: Option<PathBuf>,
    /// Gaussian sigma for --kind noise.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Downscale factor for --kind downscale (2 or 4).
    #[arg(long)]
    pub factor: Option<usize>,
    /// Streak density for --kind rain.
    #[arg(long)]
    pub density: Option<f64>,
    /// Color-cast strength for --kind underwater.
    #[arg(long)]
    pub cast: Option<f64>,
    /// Blur sigma for --kind underwater.
    #[arg(long)]
    pub blur: Option<f64>,
    /// Sensor-noise sigma for --kind underwater.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Output codec: png|ppm.
    #[arg(long)]
    pub ext: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelShapeArgs {
    /// Feature channels C.
    #[arg(long)]
    pub channels: Option<usize>,
    /// Patch side P (token dim is C·P²).
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub enc_layers: Option<usize>,
    #[arg(long)]
    pub dec_layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub ffn_mult: Option<usize>,
    /// Positional-table capacity in tokens.
    #[arg(long)]
    pub max_patches: Option<usize>,
    /// Give underwater its own task embedding while it borrows the
    /// denoising head/tail.
    #[arg(long)]
    pub underwater_own_embedding: bool,
}

#[derive(Args, Debug, Clone)]
pub struct LoopArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub log_every: Option<usize>,
    /// Global-norm gradient clipping (off when absent).
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Stop early when total loss falls below this fraction of its
    /// initial value.
    #[arg(long)]
    pub early_stop_ratio: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Manifest of the prepared training dataset.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Task trained from --manifest.
    #[arg(long)]
    pub task: Option<String>,
    /// Additional simultaneous tasks as task=manifest (repeatable).
    #[arg(long = "extra", value_name = "TASK=MANIFEST")]
    pub extra: Vec<String>,
    /// Output directory (checkpoints + loss.csv).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub shape: ModelShapeArgs,
    #[command(flatten)]
    pub hyper: LoopArgs,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    /// Checkpoint to start from.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Manifest of the fine-tuning dataset.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Task the pairs belong to (underwater routes through denoise30).
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: LoopArgs,
}

#[derive(Args, Debug)]
pub struct EnhanceArgs {
    /// Model checkpoint (mutually exclusive with --method).
    #[arg(long, conflicts_with = "method")]
    pub model: Option<PathBuf>,
    /// Classical method: dcp|identity.
    #[arg(long)]
    pub method: Option<String>,
    /// Task to run the model as (defaults to its first configured task).
    #[arg(long)]
    pub task: Option<String>,
    /// Input image or directory of images.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Print per-image milliseconds and their mean.
    #[arg(long)]
    pub time: bool,
    /// Abort on unreadable images instead of skipping with a warning.
    #[arg(long)]
    pub strict: bool,
    /// Dark-channel window radius (dcp).
    #[arg(long)]
    pub radius: Option<usize>,
    /// Haze retention omega (dcp).
    #[arg(long)]
    pub omega: Option<f64>,
    /// Transmission floor (dcp).
    #[arg(long)]
    pub t0: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Manifest whose test split is scored.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Model checkpoint to score.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Task for the model (defaults to its first configured task).
    #[arg(long)]
    pub task: Option<String>,
    /// Classical baseline to add: dcp.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Add the identity pass-through as a scored method.
    #[arg(long)]
    pub with_identity: bool,
    /// Where the per-image CSV report goes.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Input side length for the end-to-end model check.
    #[arg(long)]
    pub size: Option<usize>,
    /// Encoder and decoder layer count of the checked model.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Sampled parameters per group for the end-to-end check.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Random instances per op-level check.
    #[arg(long)]
    pub instances: Option<usize>,
    /// Precision mode: both|f32|f64.
    #[arg(long)]
    pub mode: Option<String>,
    /// Deliberately corrupt one backward rule (negative-control hook).
    #[arg(long, hide = true)]
    pub corrupt: bool,
}
