//! Command-line front end: `prepare`, `train`, `enhance`, `evaluate` and
//! `ablate`.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! runtime failures.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{CodecConfig, PathsConfig, RunConfig};

use crate::codec_pipeline::Bitrate;
use crate::eval_metrics::MetricKind;
use crate::loss::LossMode;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "amrconvnet", version, about = "Enhance AMR-coded narrowband speech to 16 kHz")]
pub struct Cli {
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build (coded, truth) pairs, the split and the manifest from a corpus.
    Prepare(PrepareArgs),
    /// Train a model on a prepared manifest.
    Train(TrainArgs),
    /// Enhance 8 kHz WAV files to 16 kHz.
    Enhance(EnhanceArgs),
    /// Score coded and enhanced test utterances against the truth.
    Evaluate(EvaluateArgs),
    /// Train once per loss objective and compare.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Directory searched recursively for WAV files.
    pub corpus: PathBuf,
    /// Output directory.
    pub out: PathBuf,
    /// Use the degradation simulator instead of the external codec.
    #[arg(long)]
    pub sim: bool,
    /// AMR bitrate(s) in kbit/s; repeat or comma-separate.
    #[arg(long = "bitrate", value_delimiter = ',')]
    pub bitrates: Vec<Bitrate>,
    /// Split seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run configuration for codec settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Defaults to `manifest.tsv` in the configured data directory.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Checkpoint and log directory; defaults to the configured run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub loss: Option<LossMode>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Train only on pairs at this bitrate.
    #[arg(long)]
    pub bitrate: Option<Bitrate>,
    /// Override the epoch limit.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "enhanced")]
    pub out: PathBuf,
    /// Also write magnitude spectrogram CSVs of the coded and enhanced audio
    /// (and the truth, with `--truth-dir`).
    #[arg(long)]
    pub dump_spectrogram: bool,
    /// Directory of 16 kHz references named like the inputs.
    #[arg(long)]
    pub truth_dir: Option<PathBuf>,
    /// 8 kHz input WAV files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Bitrates to score; all in the manifest when omitted.
    #[arg(long = "bitrate", value_delimiter = ',')]
    pub bitrates: Vec<Bitrate>,
    /// snr, lsd or pesq; repeat or comma-separate. Defaults to the config's list.
    #[arg(long = "metric", value_delimiter = ',')]
    pub metrics: Vec<MetricKind>,
    /// Report directory; defaults to `eval/` next to the checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// One subdirectory per arm plus the comparison table go here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub bitrate: Option<Bitrate>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let jobs = cli.jobs;
    if jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let command = cli.command;
    let go = move || match &command {
        Command::Prepare(a) => commands::prepare(a, jobs),
        Command::Train(a) => commands::train(a, jobs),
        Command::Enhance(a) => commands::enhance(a),
        Command::Evaluate(a) => commands::evaluate(a, jobs),
        Command::Ablate(a) => commands::ablate(a, jobs),
    };
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(runtime)?
            .install(go),
        None => go(),
    }
}
