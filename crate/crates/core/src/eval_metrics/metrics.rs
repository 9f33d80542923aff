use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::dsp::{self, StftParams};

/// Ceiling reported when the error energy vanishes.
pub const SNR_CAP_DB: f64 = 100.0;
const POWER_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Snr,
    Lsd,
    Pesq,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Snr, MetricKind::Lsd, MetricKind::Pesq];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Snr => "snr_db",
            MetricKind::Lsd => "lsd_db",
            MetricKind::Pesq => "mos_lqo",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "snr" | "snr_db" => Ok(MetricKind::Snr),
            "lsd" | "lsd_db" => Ok(MetricKind::Lsd),
            "pesq" | "mos" | "mos_lqo" => Ok(MetricKind::Pesq),
            other => Err(format!("unknown metric {other:?} (expected snr, lsd or pesq)")),
        }
    }
}

/// Scores of one signal against its reference. Absent values were not
/// requested or could not be computed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricScore {
    pub snr_db: Option<f64>,
    pub lsd_db: Option<f64>,
    pub mos_lqo: Option<f64>,
}

impl MetricScore {
    pub fn get(&self, kind: MetricKind) -> Option<f64> {
        match kind {
            MetricKind::Snr => self.snr_db,
            MetricKind::Lsd => self.lsd_db,
            MetricKind::Pesq => self.mos_lqo,
        }
    }

    pub fn set(&mut self, kind: MetricKind, value: f64) {
        match kind {
            MetricKind::Snr => self.snr_db = Some(value),
            MetricKind::Lsd => self.lsd_db = Some(value),
            MetricKind::Pesq => self.mos_lqo = Some(value),
        }
    }
}

fn same_len(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// `10 log10(Σy² / Σ(y - ŷ)²)`, capped at [`SNR_CAP_DB`].
pub fn snr_db(truth: &[f64], test: &[f64]) -> Result<f64, MetricError> {
    same_len(truth, test)?;
    let signal: f64 = truth.iter().map(|y| y * y).sum();
    if signal == 0.0 {
        return Err(MetricError::ZeroEnergy);
    }
    let noise: f64 = truth.iter().zip(test).map(|(y, t)| (y - t) * (y - t)).sum();
    if noise == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (signal / noise).log10()).min(SNR_CAP_DB))
}

/// Log-spectral distance in dB: per frame, the RMS over bins of
/// `10 (log10 P_truth - log10 P_test)`, averaged over frames. Powers are
/// floored at 1e-10.
pub fn lsd_db(truth: &[f64], test: &[f64], stft: &StftParams) -> Result<f64, MetricError> {
    same_len(truth, test)?;
    if truth.len() < stft.frame_size {
        return Err(MetricError::TooShort {
            len: truth.len(),
            frame: stft.frame_size,
        });
    }
    let a = dsp::stft_magnitude(truth, stft);
    let b = dsp::stft_magnitude(test, stft);
    let logp = |m: f64| (m * m).max(POWER_FLOOR).log10();
    let mut total = 0.0;
    for f in 0..a.frames() {
        let ms: f64 = a
            .row(f)
            .iter()
            .zip(b.row(f))
            .map(|(&x, &y)| {
                let d = logp(x) - logp(y);
                d * d
            })
            .sum::<f64>()
            / a.bins() as f64;
        total += 10.0 * ms.sqrt();
    }
    Ok(total / a.frames() as f64)
}
