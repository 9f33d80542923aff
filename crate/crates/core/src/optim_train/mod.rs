//! Adam, the epoch loop with early stopping, patch batching, checkpoints
//! and the per-epoch training log.

mod adam;
mod batches;
mod checkpoint;
mod log;
mod trainer;

use std::path::PathBuf;

use thiserror::Error;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use batches::{load_pairs, make_batches, Batch, EpochBatches, TrainingPair};
pub use checkpoint::{Checkpoint, CheckpointError, FORMAT_VERSION};
pub use log::{EpochRecord, TrainLog};
pub use trainer::{train, TrainConfig, TrainOutcome, Trainer, BEST_CHECKPOINT, LAST_CHECKPOINT, LOG_FILE};

use crate::audio_io::AudioError;
use crate::codec_pipeline::ManifestError;
use crate::loss::LossError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: u64 },
    #[error("non-finite gradient for parameter tensor {param}")]
    NonFiniteGradient { param: usize },
    #[error("no {0} utterances")]
    EmptySplit(&'static str),
    #[error("training data: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

/// Mixes a run seed with a stream tag and counter into an independent seed.
pub(crate) fn derive_seed(seed: u64, tag: u64, n: u64) -> u64 {
    let mut z = seed ^ tag.rotate_left(32) ^ n.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
