//! Windowing and short-time Fourier transform magnitudes.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("frame size {0} is not a power of two >= 2")]
    FrameSize(usize),
    #[error("hop {hop} must satisfy 0 < hop <= frame size {frame_size}")]
    Hop { hop: usize, frame_size: usize },
    #[error("upstream gradient has {got} cells, spectrogram has {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftParams {
    pub frame_size: usize,
    pub hop: usize,
    #[serde(default)]
    pub window: WindowKind,
}

impl Default for StftParams {
    /// 512-sample frames (32 ms at 16 kHz), hop 128, Hann window.
    fn default() -> Self {
        Self {
            frame_size: 512,
            hop: 128,
            window: WindowKind::Hann,
        }
    }
}

impl StftParams {
    pub fn new(frame_size: usize, hop: usize) -> Result<Self, DspError> {
        let p = Self {
            frame_size,
            hop,
            window: WindowKind::Hann,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_window(mut self, window: WindowKind) -> Self {
        self.window = window;
        self
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.frame_size < 2 || !self.frame_size.is_power_of_two() {
            return Err(DspError::FrameSize(self.frame_size));
        }
        if self.hop == 0 || self.hop > self.frame_size {
            return Err(DspError::Hop {
                hop: self.hop,
                frame_size: self.frame_size,
            });
        }
        Ok(())
    }

    /// Number of frequency bins, `frame_size / 2 + 1`.
    pub fn bins(&self) -> usize {
        self.frame_size / 2 + 1
    }

    /// Frame count for a signal of `len` samples. Signals shorter than one
    /// frame are zero-padded to one frame.
    pub fn frames(&self, len: usize) -> usize {
        if len <= self.frame_size {
            1
        } else {
            1 + (len - self.frame_size) / self.hop
        }
    }

    pub fn window_coefficients(&self) -> Vec<f64> {
        match self.window {
            WindowKind::Hann => hann_window(self.frame_size),
            WindowKind::Rectangular => vec![1.0; self.frame_size],
        }
    }
}

/// Periodic Hann window: `w[k] = 0.5 - 0.5 cos(2πk/n)`.
pub fn hann_window(n: usize) -> Vec<f64> {
    assert!(n >= 2, "window length must be at least 2");
    (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())
        .collect()
}

/// Magnitude spectrogram, frames as rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    magnitudes: Vec<f64>,
    frames: usize,
    bins: usize,
    params: StftParams,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn params(&self) -> StftParams {
        self.params
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.magnitudes
    }

    pub fn get(&self, frame: usize, bin: usize) -> f64 {
        self.magnitudes[frame * self.bins + bin]
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.magnitudes[frame * self.bins..(frame + 1) * self.bins]
    }

    /// Comma-separated matrix: one line per frame, one column per bin.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for f in 0..self.frames {
            let line: Vec<String> = self.row(f).iter().map(|m| format!("{m:.6e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Windowed frame `index` of `signal`, zero beyond its end.
fn windowed_frame(signal: &[f64], window: &[f64], start: usize, buf: &mut [Complex<f64>]) {
    for (k, (slot, w)) in buf.iter_mut().zip(window).enumerate() {
        let x = signal.get(start + k).copied().unwrap_or(0.0);
        *slot = Complex::new(x * w, 0.0);
    }
}

/// Complex half-spectrum of every frame, flattened `[frames × bins]`.
fn stft_complex(signal: &[f64], params: &StftParams) -> (Vec<Complex<f64>>, usize) {
    let n = params.frame_size;
    let bins = params.bins();
    let frames = params.frames(signal.len());
    let window = params.window_coefficients();
    let fft = forward_plan(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Vec::with_capacity(frames * bins);
    for f in 0..frames {
        windowed_frame(signal, &window, f * params.hop, &mut buf);
        fft.process_with_scratch(&mut buf, &mut scratch);
        out.extend_from_slice(&buf[..bins]);
    }
    (out, frames)
}

/// `|DFT(window ⊙ frame)|` over bins `0..=frame_size/2` for each frame.
pub fn stft_magnitude(signal: &[f64], params: &StftParams) -> Spectrogram {
    let (spec, frames) = stft_complex(signal, params);
    Spectrogram {
        magnitudes: spec.iter().map(|z| z.norm()).collect(),
        frames,
        bins: params.bins(),
        params: *params,
    }
}

/// Gradient of `Σ upstream ⊙ |STFT(signal)|` with respect to `signal`.
///
/// Bins with zero magnitude contribute zero gradient.
pub fn stft_magnitude_grad(
    signal: &[f64],
    params: &StftParams,
    upstream: &[f64],
) -> Result<Vec<f64>, DspError> {
    let n = params.frame_size;
    let bins = params.bins();
    let (spec, frames) = stft_complex(signal, params);
    if upstream.len() != spec.len() {
        return Err(DspError::ShapeMismatch {
            expected: spec.len(),
            got: upstream.len(),
        });
    }
    let window = params.window_coefficients();
    let ifft = inverse_plan(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let mut grad = vec![0.0; signal.len()];
    for f in 0..frames {
        buf.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
        let mut any = false;
        for b in 0..bins {
            let z = spec[f * bins + b];
            let m = z.norm();
            let u = upstream[f * bins + b];
            if m > 0.0 && u != 0.0 {
                buf[b] = z * (u / m);
                any = true;
            }
        }
        if !any {
            continue;
        }
        // Re Σ_b c_b e^{+2πi b k / n}: an unnormalized inverse transform.
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = f * params.hop;
        for k in 0..n {
            if let Some(g) = grad.get_mut(start + k) {
                *g += window[k] * buf[k].re;
            }
        }
    }
    Ok(grad)
}
