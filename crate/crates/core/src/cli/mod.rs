//! Command-line front end for the `maskdiff` binary.
//!
//! Each command resolves its settings from built-in defaults, then the
//! command's table in the optional TOML `--config` file, then flags, and
//! writes the resolved values to `resolved_config.json` in its output
//! directory.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{BenchConfig, DecodeConfig, GenerateConfig, RunConfig, TrainRunConfig, RESOLVED_CONFIG_FILE};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "MASKDIFF_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "maskdiff", version, about = "Conditional masked-diffusion decoding on synthetic transcription tasks")]
pub struct Cli {
    /// TOML file with a top-level `seed` and per-command tables
    /// (`generate_data`, `train`, `decode`, `bench`). Flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output root used when a command's --out is not given.
    #[arg(long, global = true, env = OUT_ENV, default_value = "runs")]
    pub out_root: PathBuf,

    /// Global seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic task and write train/val/test JSONL plus a manifest.
    GenerateData(GenerateArgs),
    /// Train the neural denoiser and write a checkpoint and loss log.
    Train(TrainArgs),
    /// Decode a dataset split and write hypotheses with per-step traces.
    Decode(DecodeArgs),
    /// Sweep samplers and NFE budgets and write a benchmark report.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Task family: noisy_channel or hmm_emission.
    #[arg(long)]
    pub kind: Option<String>,
    /// Number of content symbols.
    #[arg(long)]
    pub vocab: Option<usize>,
    /// Total number of examples across all splits.
    #[arg(long)]
    pub n: Option<usize>,
    /// Shortest target length.
    #[arg(long)]
    pub min_len: Option<usize>,
    /// Longest target length.
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Channel substitution probability.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Feature frames per target token.
    #[arg(long)]
    pub frames_per_token: Option<usize>,
    /// Feature dimension (at least the content vocabulary size).
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Successor probability of the hidden chain (hmm_emission only).
    #[arg(long)]
    pub transition_strength: Option<f64>,
    /// Half-width of the uniform feature jitter.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Output directory; defaults to <out-root>/data.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory; defaults to <out-root>/data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Split to train on.
    #[arg(long)]
    pub split: Option<String>,
    /// Hidden width.
    #[arg(long)]
    pub d_model: Option<usize>,
    /// Residual hidden layers.
    #[arg(long)]
    pub hidden_layers: Option<usize>,
    /// Canvas length targets are padded to; defaults to the task's longest target plus one.
    #[arg(long)]
    pub canvas_len: Option<usize>,
    /// Optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Examples per step.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Optimizer: adam or sgd.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// SGD momentum, or Adam's first-moment decay.
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Global-norm gradient clip; 0 disables clipping.
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Lower bound of the sampled diffusion time.
    #[arg(long)]
    pub t_floor: Option<f64>,
    /// Enable iterative self-correction training.
    #[arg(long)]
    pub isct: bool,
    /// Chained corruption stages when --isct is set.
    #[arg(long)]
    pub isct_steps: Option<usize>,
    /// How intermediate reconstructions are drawn: sample or argmax.
    #[arg(long)]
    pub reconstruction: Option<String>,
    /// Output directory; defaults to <out-root>/train.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Trained checkpoint to decode with.
    #[arg(long, conflicts_with = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Use the exact posterior of the dataset's task instead of a checkpoint.
    #[arg(long)]
    pub oracle: bool,
    /// Dataset directory; defaults to <out-root>/data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Split to decode.
    #[arg(long)]
    pub split: Option<String>,
    /// Entropy budget for eb_conf and pbeb_conf.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Positional decay for pbeb_conf.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Positions per step for conf_top_k.
    #[arg(long)]
    pub k: Option<usize>,
    /// Canvas length; defaults to the checkpoint's training canvas or the task's longest target plus one.
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Token choice at selected positions: argmax or sample.
    #[arg(long)]
    pub reveal: Option<String>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// random, dfm, top_k (conf_top_k), eb_conf or pbeb_conf.
    #[arg(long)]
    pub sampler: Option<String>,
    /// Maximum denoiser evaluations per utterance.
    #[arg(long)]
    pub max_nfe: Option<usize>,
    /// Output directory; defaults to <out-root>/decode.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated samplers; defaults to all five.
    #[arg(long, value_delimiter = ',')]
    pub samplers: Option<Vec<String>>,
    /// Comma-separated NFE budgets, e.g. 2,4,8,16,32.
    #[arg(long, value_delimiter = ',')]
    pub sweep_nfe: Option<Vec<usize>>,
    /// Add RTFx-against-length rows comparing each sampler with left-to-right decoding.
    #[arg(long)]
    pub compare_ar: bool,
    /// Also write SVG charts.
    #[arg(long)]
    pub svg: bool,
    /// Output directory; defaults to <out-root>/bench.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Invalid input detected after argument parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() || matches!(err.downcast_ref::<crate::Error>(), Some(crate::Error::Config(_))) {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
