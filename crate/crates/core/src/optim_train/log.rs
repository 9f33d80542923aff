use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;

const HEADER: &str = "epoch\tsteps\ttrain_reconstruction\ttrain_perceptual\tval_total\tbatch_digest";

/// One epoch of training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Optimizer steps taken so far, cumulative.
    pub steps: u64,
    pub train_reconstruction: f64,
    pub train_perceptual: f64,
    pub val_total: f64,
    /// Fingerprint of the epoch's patch order.
    pub batch_digest: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    /// Tab-separated, one epoch per line. Floats use shortest round-trip
    /// formatting so identical runs give identical bytes.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{:e}\t{:e}\t{:e}\t{}",
                r.epoch, r.steps, r.train_reconstruction, r.train_perceptual, r.val_total, r.batch_digest
            );
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| TrainError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn parse(text: &str) -> Result<Self, TrainError> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(TrainError::Config("train log: bad header".into()));
        }
        let bad = |n: usize| TrainError::Config(format!("train log: malformed line {n}"));
        let mut records = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(i + 2));
            }
            records.push(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad(i + 2))?,
                steps: f[1].parse().map_err(|_| bad(i + 2))?,
                train_reconstruction: f[2].parse().map_err(|_| bad(i + 2))?,
                train_perceptual: f[3].parse().map_err(|_| bad(i + 2))?,
                val_total: f[4].parse().map_err(|_| bad(i + 2))?,
                batch_digest: f[5].to_string(),
            });
        }
        Ok(Self { records })
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}
