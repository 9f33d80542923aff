//! Training-pair production: codec round trips, the hermetic degradation
//! simulator, corpus splitting and the pair manifest.

mod bitrate;
mod degrade;
mod external;
mod manifest;
mod prepare;
mod split;

use thiserror::Error;

use crate::audio_io::AudioError;
use crate::tool::ToolError;

pub use bitrate::{Bitrate, BitrateParseError};
pub use degrade::{degrade_sim, SimStrength};
pub use external::{encode_decode_amr, CodecTool, CODEC_BIN_ENV};
pub use manifest::{Manifest, ManifestError, ManifestRow, Split};
pub use prepare::{prepare_pairs, CodingMode, PrepareConfig, PrepareOutcome, MANIFEST_FILE, SKIP_LOG_FILE};
pub use split::{speaker_of, split_corpus, CorpusSplit};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("expected {expected} Hz audio, got {got} Hz")]
    SampleRate { expected: u32, got: u32 },
    #[error("codec tool: {0}")]
    Tool(#[from] ToolError),
    #[error("codec output unparsable: {0}")]
    OutputUnparsable(AudioError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("corpus directory {0} does not exist")]
    MissingCorpus(std::path::PathBuf),
    #[error("no usable utterances: every input file failed")]
    EmptyManifest,
}
