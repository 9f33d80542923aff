//! Binary checkpoint format.
//!
//! ```text
//! magic        8 bytes  "AMRCNCKP"
//! version      u32 LE
//! header_len   u64 LE
//! header       JSON (model config, counters, log, tensor layout)
//! tensors      f64 LE: parameters, first moments, second moments,
//!              then best-epoch parameters when present
//! checksum     SHA-256 of everything above
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{AdamHyper, AdamState, TrainLog};
use crate::model::{Model, ModelConfig, ModelError};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"AMRCNCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint format version {found} is not supported (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Everything needed to resume training exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: u64,
    pub best_val: Option<f64>,
    pub best_epoch: Option<usize>,
    /// Epochs since the last validation improvement.
    pub stale_epochs: usize,
    pub log: TrainLog,
    /// Parameters from the best validation epoch, if different storage is wanted.
    pub best_params: Option<Vec<Tensor>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    adam: AdamHyper,
    adam_t: u64,
    epoch: usize,
    step: u64,
    best_val: Option<f64>,
    best_epoch: Option<usize>,
    stale_epochs: usize,
    log: TrainLog,
    shapes: Vec<Vec<usize>>,
    has_best: bool,
}

impl Checkpoint {
    /// Wraps a freshly built model with zero optimizer state.
    pub fn initial(model: Model, hyper: AdamHyper) -> Self {
        let adam = AdamState::new(hyper, model.params());
        Self {
            model,
            adam,
            epoch: 0,
            step: 0,
            best_val: None,
            best_epoch: None,
            stale_epochs: 0,
            log: TrainLog::default(),
            best_params: None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            model: self.model.config().clone(),
            adam: self.adam.hyper,
            adam_t: self.adam.t,
            epoch: self.epoch,
            step: self.step,
            best_val: self.best_val,
            best_epoch: self.best_epoch,
            stale_epochs: self.stale_epochs,
            log: self.log.clone(),
            shapes: self.model.params().iter().map(|p| p.shape().to_vec()).collect(),
            has_best: self.best_params.is_some(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        self.model.params().iter().for_each(|p| put(p.data()));
        self.adam.m.iter().for_each(|m| put(m));
        self.adam.v.iter().for_each(|v| put(v));
        if let Some(best) = &self.best_params {
            best.iter().for_each(|p| put(p.data()));
        }
        let sum = Sha256::digest(&out);
        out.extend_from_slice(&sum);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let corrupt = |m: &str| CheckpointError::Corrupt(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        if bytes.len() < 20 + 32 {
            return Err(corrupt("truncated"));
        }
        let (body, sum) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != sum {
            return Err(corrupt("checksum mismatch (truncated or modified)"));
        }
        let header_len = u64::from_le_bytes(body[12..20].try_into().unwrap()) as usize;
        let json = body.get(20..20usize.saturating_add(header_len)).ok_or_else(|| corrupt("truncated header"))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| CheckpointError::Corrupt(format!("header: {e}")))?;

        let mut rest = &body[20 + header_len..];
        let mut take = |n: usize| -> Result<Vec<f64>, CheckpointError> {
            if rest.len() < 8 * n {
                return Err(corrupt("truncated tensor data"));
            }
            let (head, tail) = rest.split_at(8 * n);
            rest = tail;
            Ok(head.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let numels: Vec<usize> = header.shapes.iter().map(|s| s.iter().product()).collect();
        let tensors = |take: &mut dyn FnMut(usize) -> Result<Vec<f64>, CheckpointError>| {
            header
                .shapes
                .iter()
                .zip(&numels)
                .map(|(s, &n)| Tensor::new(s.clone(), take(n)?).map_err(|e| CheckpointError::Corrupt(e.to_string())))
                .collect::<Result<Vec<_>, _>>()
        };
        let params = tensors(&mut take)?;
        let m = numels.iter().map(|&n| take(n)).collect::<Result<Vec<_>, _>>()?;
        let v = numels.iter().map(|&n| take(n)).collect::<Result<Vec<_>, _>>()?;
        let best_params = if header.has_best { Some(tensors(&mut take)?) } else { None };
        if !rest.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Self {
            model: Model::from_parts(header.model, params)?,
            adam: AdamState {
                hyper: header.adam,
                t: header.adam_t,
                m,
                v,
            },
            epoch: header.epoch,
            step: header.step,
            best_val: header.best_val,
            best_epoch: header.best_epoch,
            stale_epochs: header.stale_epochs,
            log: header.log,
            best_params,
        })
    }

    /// Writes atomically: a temporary sibling file is renamed into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        let io = |e| CheckpointError::Io {
            path: path.to_path_buf(),
            source: e,
        };
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| CheckpointError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_bytes(&bytes)
    }

    /// The model to deploy: best-epoch parameters when recorded.
    pub fn best_model(&self) -> Model {
        match &self.best_params {
            Some(p) => Model::from_parts(self.model.config().clone(), p.clone()).expect("shapes were validated on load"),
            None => self.model.clone(),
        }
    }
}
