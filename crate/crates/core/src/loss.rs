//! Training objective: time-domain MSE plus a weighted STFT-magnitude MSE.
//!
//! `L = mean((ŷ - y)²) + λ · mean((|STFT ŷ| - |STFT y|)²)`, where the second
//! mean runs over every (frame, bin) cell of the spectrogram.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, StftParams};
use crate::tensor::{Graph, Tensor, TensorError, Var};

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("prediction has {pred} samples, truth has {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("loss needs at least one sample")]
    Empty,
    #[error("lambda must be finite and non-negative, got {0}")]
    Lambda(f64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Which terms enter the optimized total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    #[default]
    Combined,
    ReconstructionOnly,
    PerceptualOnly,
}

impl LossMode {
    pub const ALL: [LossMode; 3] = [
        LossMode::ReconstructionOnly,
        LossMode::PerceptualOnly,
        LossMode::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::Combined => "combined",
            LossMode::ReconstructionOnly => "reconstruction_only",
            LossMode::PerceptualOnly => "perceptual_only",
        }
    }

    /// Short row label used in ablation tables.
    pub fn label(self) -> &'static str {
        match self {
            LossMode::Combined => "Comb.",
            LossMode::ReconstructionOnly => "Reconstr.",
            LossMode::PerceptualOnly => "Percept.",
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "combined" => Ok(LossMode::Combined),
            "reconstruction_only" | "reconstruction" => Ok(LossMode::ReconstructionOnly),
            "perceptual_only" | "perceptual" => Ok(LossMode::PerceptualOnly),
            other => Err(format!(
                "unknown loss mode {other:?} (expected combined, reconstruction_only or perceptual_only)"
            )),
        }
    }
}

/// Divisor of the summed squared magnitude error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PerceptualNorm {
    /// Frames times bins: a plain mean over spectrogram cells.
    #[default]
    Frames,
    /// Signal samples times bins.
    Samples,
}

impl PerceptualNorm {
    /// Factor applied to the per-cell mean.
    pub fn factor(self, frames: usize, samples: usize) -> f64 {
        match self {
            PerceptualNorm::Frames => 1.0,
            PerceptualNorm::Samples => frames as f64 / samples as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub lambda: f64,
    pub stft: StftParams,
    pub mode: LossMode,
    pub normalization: PerceptualNorm,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            stft: StftParams::default(),
            mode: LossMode::Combined,
            normalization: PerceptualNorm::Frames,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(LossError::Lambda(self.lambda));
        }
        Ok(())
    }

    /// Total from the two terms according to `mode`.
    pub fn total(&self, reconstruction: f64, perceptual: f64) -> f64 {
        match self.mode {
            LossMode::Combined => reconstruction + self.lambda * perceptual,
            LossMode::ReconstructionOnly => reconstruction,
            LossMode::PerceptualOnly => perceptual,
        }
    }
}

/// All terms are reported regardless of mode; only `total` follows it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossValue {
    pub total: f64,
    pub reconstruction: f64,
    pub perceptual: f64,
}

impl LossValue {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.reconstruction.is_finite() && self.perceptual.is_finite()
    }
}

fn check(pred: &[f64], truth: &[f64]) -> Result<(), LossError> {
    if pred.len() != truth.len() {
        return Err(LossError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(LossError::Empty);
    }
    Ok(())
}

pub fn reconstruction_loss(pred: &[f64], truth: &[f64]) -> Result<f64, LossError> {
    check(pred, truth)?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

pub fn perceptual_loss(pred: &[f64], truth: &[f64], stft: &StftParams) -> Result<f64, LossError> {
    check(pred, truth)?;
    let a = dsp::stft_magnitude(pred, stft);
    let b = dsp::stft_magnitude(truth, stft);
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / a.as_slice().len() as f64)
}

pub fn combined_loss(pred: &[f64], truth: &[f64], config: &LossConfig) -> Result<LossValue, LossError> {
    config.validate()?;
    let reconstruction = reconstruction_loss(pred, truth)?;
    let perceptual = perceptual_loss(pred, truth, &config.stft)?
        * config.normalization.factor(config.stft.frames(pred.len()), pred.len());
    Ok(LossValue {
        total: config.total(reconstruction, perceptual),
        reconstruction,
        perceptual,
    })
}

/// Differentiable handles for one loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub reconstruction: Var,
    pub perceptual: Var,
}

impl LossVars {
    pub fn value(&self, graph: &Graph<'_>) -> LossValue {
        LossValue {
            total: graph.value(self.total).data()[0],
            reconstruction: graph.value(self.reconstruction).data()[0],
            perceptual: graph.value(self.perceptual).data()[0],
        }
    }
}

/// Records the loss of a `[1, T]` prediction against `truth` on `graph`.
/// Terms excluded by the mode are recorded but do not feed `total`.
pub fn combined_loss_graph(
    graph: &mut Graph<'_>,
    pred: Var,
    truth: &[f64],
    config: &LossConfig,
) -> Result<LossVars, LossError> {
    config.validate()?;
    check(graph.value(pred).data(), truth)?;
    let target = graph.leaf(Tensor::signal(truth.to_vec()));
    let diff = graph.sub(pred, target)?;
    let sq = graph.square(diff);
    let reconstruction = graph.mean(sq);

    let pred_mag = graph.stft_magnitude(pred, config.stft)?;
    let truth_spec = dsp::stft_magnitude(truth, &config.stft);
    let truth_mag = graph.leaf(Tensor::new(
        vec![truth_spec.frames(), truth_spec.bins()],
        truth_spec.into_vec(),
    )?);
    let mdiff = graph.sub(pred_mag, truth_mag)?;
    let msq = graph.square(mdiff);
    let mut perceptual = graph.mean(msq);
    let factor = config.normalization.factor(config.stft.frames(truth.len()), truth.len());
    if factor != 1.0 {
        perceptual = graph.scale(perceptual, factor);
    }

    let total = match config.mode {
        LossMode::Combined => {
            let weighted = graph.scale(perceptual, config.lambda);
            graph.add(reconstruction, weighted)?
        }
        LossMode::ReconstructionOnly => reconstruction,
        LossMode::PerceptualOnly => perceptual,
    };
    Ok(LossVars {
        total,
        reconstruction,
        perceptual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
    }

    #[test]
    fn reconstruction_examples() {
        let x = noise(16, 1);
        assert_eq!(reconstruction_loss(&x, &x).unwrap(), 0.0);
        assert_eq!(reconstruction_loss(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(
            reconstruction_loss(&[1.0], &[0.0, 0.0]),
            Err(LossError::LengthMismatch { pred: 1, truth: 2 })
        );
        assert_eq!(reconstruction_loss(&[], &[]), Err(LossError::Empty));
    }

    #[test]
    fn reconstruction_gradient_is_two_residual_over_t() {
        let pred = noise(32, 2);
        let truth = noise(32, 3);
        let mut g = Graph::new();
        let p = g.leaf(Tensor::signal(pred.clone()));
        let cfg = LossConfig {
            mode: LossMode::ReconstructionOnly,
            stft: StftParams::new(16, 4).unwrap(),
            ..LossConfig::default()
        };
        let vars = combined_loss_graph(&mut g, p, &truth, &cfg).unwrap();
        g.backward(vars.total).unwrap();
        let grad = g.grad(p).unwrap();
        let h = 1e-5;
        for i in 0..pred.len() {
            let closed = 2.0 * (pred[i] - truth[i]) / 32.0;
            let mut up = pred.clone();
            up[i] += h;
            let mut dn = pred.clone();
            dn[i] -= h;
            let fd = (reconstruction_loss(&up, &truth).unwrap() - reconstruction_loss(&dn, &truth).unwrap()) / (2.0 * h);
            assert!((grad[i] - closed).abs() < 1e-12);
            assert!((fd - closed).abs() < 1e-4);
        }
    }

    #[test]
    fn perceptual_zero_on_identity() {
        let x = noise(1024, 4);
        assert_eq!(perceptual_loss(&x, &x, &StftParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn lambda_zero_total_is_reconstruction() {
        let (a, b) = (noise(600, 5), noise(600, 6));
        let cfg = LossConfig {
            lambda: 0.0,
            ..LossConfig::default()
        };
        let v = combined_loss(&a, &b, &cfg).unwrap();
        assert_eq!(v.total, reconstruction_loss(&a, &b).unwrap());
        assert!(v.perceptual > 0.0);
    }

    #[test]
    fn modes_select_terms() {
        let (a, b) = (noise(600, 7), noise(600, 8));
        let base = LossConfig {
            lambda: 2.5,
            ..LossConfig::default()
        };
        let c = combined_loss(&a, &b, &base).unwrap();
        assert!((c.total - (c.reconstruction + 2.5 * c.perceptual)).abs() <= 1e-12 * c.total);
        let r = combined_loss(&a, &b, &LossConfig { mode: LossMode::ReconstructionOnly, ..base }).unwrap();
        assert_eq!(r.total, r.reconstruction);
        let p = combined_loss(&a, &b, &LossConfig { mode: LossMode::PerceptualOnly, ..base }).unwrap();
        assert_eq!(p.total, p.perceptual);
        assert!(combined_loss(&a, &b, &LossConfig { lambda: -1.0, ..base }).is_err());
    }

    #[test]
    fn graph_and_direct_paths_agree() {
        let (a, b) = (noise(1000, 9), noise(1000, 10));
        let cfg = LossConfig::default();
        let direct = combined_loss(&a, &b, &cfg).unwrap();
        let mut g = Graph::new();
        let p = g.leaf(Tensor::signal(a));
        let vars = combined_loss_graph(&mut g, p, &b, &cfg).unwrap();
        let v = vars.value(&g);
        assert!((v.total - direct.total).abs() <= 1e-12 * direct.total);
        assert!((v.perceptual - direct.perceptual).abs() <= 1e-12 * direct.perceptual);
    }

    #[test]
    fn sample_normalization_rescales_perceptual() {
        let (a, b) = (noise(2048, 11), noise(2048, 12));
        let frames = combined_loss(&a, &b, &LossConfig::default()).unwrap();
        let cfg = LossConfig {
            normalization: PerceptualNorm::Samples,
            ..LossConfig::default()
        };
        let samples = combined_loss(&a, &b, &cfg).unwrap();
        let f = StftParams::default().frames(2048) as f64;
        assert!((samples.perceptual - frames.perceptual * f / 2048.0).abs() <= 1e-12 * frames.perceptual);
        let mut g = Graph::new();
        let p = g.leaf(Tensor::signal(a));
        let v = combined_loss_graph(&mut g, p, &b, &cfg).unwrap().value(&g);
        assert!((v.total - samples.total).abs() <= 1e-12 * samples.total);
    }

    #[test]
    fn mode_parsing() {
        for m in LossMode::ALL {
            assert_eq!(m.as_str().parse::<LossMode>().unwrap(), m);
        }
        assert!("l1".parse::<LossMode>().is_err());
    }
}
