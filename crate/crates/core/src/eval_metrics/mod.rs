//! Objective quality metrics and corpus-level enhancement reports.

mod metrics;
mod pesq;
mod report;

use thiserror::Error;

pub use metrics::{lsd_db, snr_db, MetricKind, MetricScore, SNR_CAP_DB};
pub use pesq::{pesq_mos_lqo, PesqTool, MOS_LQO_RANGE, PESQ_BIN_ENV};
pub use report::{evaluate_corpus, EvalConfig, EvalReport, ReportRow, UtteranceScore, ALL_SPEAKERS};

use crate::audio_io::AudioError;
use crate::model::ModelError;
use crate::tool::ToolError;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("signals differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("reference signal has zero energy")]
    ZeroEnergy,
    #[error("signal of {len} samples is shorter than one {frame}-sample frame")]
    TooShort { len: usize, frame: usize },
    #[error("PESQ tool unavailable: {0}")]
    ToolMissing(String),
    #[error("PESQ tool failed: {0}")]
    Tool(ToolError),
    #[error("unparsable PESQ output: {0}")]
    Unparsable(String),
    #[error("no test utterances")]
    NoTestUtterances,
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}
