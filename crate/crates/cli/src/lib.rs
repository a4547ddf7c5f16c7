//! `spoofnoise` command-line pipeline.
//!
//! Subcommands chain through TSV manifests: `gen-testdata` writes a corpus
//! manifest, `mix` writes noisy copies plus a mix manifest, `extract` writes
//! one feature file per trial plus an index, `train` and `score` consume
//! indexes, and `fuse` / `eval` consume score files.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 partial batch failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod fsutil;
pub mod tables;

pub use config::Overrides;

#[derive(Parser, Debug)]
#[command(name = "spoofnoise", version, about = "Spoofing countermeasure pipeline for noisy speech")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Global seed; per-item seeds are derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to available cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// `key=value` override, e.g. `train.epochs=5` or `mgd.gamma=0.7`.
    #[arg(long = "config", global = true, value_name = "KEY=VALUE")]
    pub config: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus and noise recordings.
    GenTestdata(GenArgs),
    /// Add noise to every manifest utterance at every SNR.
    Mix(MixArgs),
    /// Extract delta-stacked features for every manifest trial.
    Extract(ExtractArgs),
    /// Train a classifier on an extracted feature index.
    Train(TrainArgs),
    /// Score every trial of a feature index.
    Score(ScoreArgs),
    /// Average score files trial by trial.
    Fuse(FuseArgs),
    /// Equal error rates per attack and condition.
    Eval(EvalArgs),
    /// Summarize a WAV, feature or model file.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Human utterances per split; each gets one spoof per variant.
    #[arg(long, default_value_t = 10)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 1.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 3)]
    pub variants: usize,
    #[arg(long, default_value_t = 16000)]
    pub sample_rate: u32,
    /// Length of each generated noise recording.
    #[arg(long, default_value_t = 10.0)]
    pub noise_seconds: f64,
}

#[derive(Args, Debug)]
pub struct MixArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// `label=path`; repeatable.
    #[arg(long = "noise", value_name = "LABEL=PATH")]
    pub noise: Vec<String>,
    /// Use every `*.wav` in this directory, labelled by file stem.
    #[arg(long)]
    pub noise_dir: Option<PathBuf>,
    /// Comma-separated target SNRs in dB.
    #[arg(long, value_delimiter = ',', default_values_t = [20.0, 10.0, 0.0], allow_negative_numbers = true)]
    pub snr: Vec<f64>,
    /// Only rows of this split.
    #[arg(long)]
    pub split: Option<String>,
    /// Also copy the clean utterances into the output manifest.
    #[arg(long)]
    pub include_clean: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Feature kind (LMS, RLMS, IF, BPD, GD, MGD) or `all`.
    #[arg(long, default_value = "all")]
    pub kind: String,
    #[arg(long)]
    pub split: Option<String>,
    /// Feature files go to `<out>/<KIND>/` with an `index.tsv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Training split; `any` uses every row.
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub split: Option<String>,
    /// Defaults to the index's feature kind.
    #[arg(long)]
    pub system_id: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub scores: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Writes `<out>.tsv` and `<out>.txt`.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated subset of attack, noise, snr.
    #[arg(long, value_delimiter = ',', default_values_t = ["attack".to_string(), "noise".to_string(), "snr".to_string()])]
    pub group_by: Vec<String>,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    pub file: PathBuf,
    /// Write a grayscale PGM of a feature matrix.
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0:#}")]
    Data(#[from] anyhow::Error),
    #[error("{failed} of {total} items failed")]
    Partial { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Partial { .. } => 3,
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides::parse(&cli.common.config).map_err(|e| CliError::Usage(format!("{e:#}")))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.common.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Data(e.into()))?;
    let ctx = commands::Context {
        seed: cli.common.seed,
        overrides,
    };
    pool.install(|| match &cli.command {
        Command::GenTestdata(a) => commands::gen_testdata(&ctx, a),
        Command::Mix(a) => commands::mix(&ctx, a),
        Command::Extract(a) => commands::extract(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Score(a) => commands::score(&ctx, a),
        Command::Fuse(a) => commands::fuse(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Inspect(a) => commands::inspect(&ctx, a),
    })
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
