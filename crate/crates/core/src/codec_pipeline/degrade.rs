//! Hermetic stand-in for a narrowband codec: low-pass, decimate by two,
//! µ-law companding. It is not a model of AMR distortion.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Bitrate, CodecError};
use crate::audio_io::{AudioClip, NARROWBAND_RATE, WIDEBAND_RATE};

const MU: f64 = 255.0;
const FILTER_HALF_WIDTH: i64 = 64;
const KAISER_BETA: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimStrength {
    /// µ-law quantizer bit depth.
    pub bits: u32,
    pub cutoff_hz: f64,
}

impl Default for SimStrength {
    fn default() -> Self {
        Self {
            bits: 8,
            cutoff_hz: 3400.0,
        }
    }
}

impl SimStrength {
    /// Coarser quantization for lower codec modes, so simulated corpora keep
    /// the quality ordering of the real bitrates.
    pub fn for_bitrate(bitrate: Bitrate) -> Self {
        let bits = match bitrate {
            Bitrate::Kbps4_75 | Bitrate::Kbps5_15 => 4,
            Bitrate::Kbps5_90 | Bitrate::Kbps6_70 => 5,
            Bitrate::Kbps7_40 | Bitrate::Kbps7_95 => 6,
            Bitrate::Kbps10_20 => 7,
            Bitrate::Kbps12_20 => 8,
        };
        Self {
            bits,
            ..Self::default()
        }
    }

    fn levels(&self) -> f64 {
        ((1u64 << (self.bits.clamp(2, 24) - 1)) - 1) as f64
    }

    /// Linear-domain quantizer step near amplitude `a`.
    pub fn step_at(&self, a: f64) -> f64 {
        (1.0 + MU).ln() * (1.0 + MU * a.abs().min(1.0)) / (MU * self.levels())
    }

    fn quantize(&self, x: f64) -> f64 {
        let x = x.clamp(-1.0, 1.0);
        let y = x.signum() * (1.0 + MU * x.abs()).ln() / (1.0 + MU).ln();
        let l = self.levels();
        let q = (y * l).round() / l;
        if q == 0.0 {
            return 0.0;
        }
        q.signum() * ((1.0 + MU).powf(q.abs()) - 1.0) / MU
    }
}

fn bessel_i0(x: f64) -> f64 {
    let (mut sum, mut term) = (1.0, 1.0);
    for k in 1..100 {
        term *= (x / (2.0 * k as f64)).powi(2);
        sum += term;
    }
    sum
}

fn lowpass_taps(cutoff_hz: f64, rate: f64) -> Vec<f64> {
    let fc = (cutoff_hz / rate).clamp(1e-4, 0.5);
    let i0b = bessel_i0(KAISER_BETA);
    let mut taps: Vec<f64> = (-FILTER_HALF_WIDTH..=FILTER_HALF_WIDTH)
        .map(|n| {
            let x = n as f64 / (FILTER_HALF_WIDTH + 1) as f64;
            let arg = 2.0 * PI * fc * n as f64;
            let sinc = if n == 0 { 1.0 } else { arg.sin() / arg };
            2.0 * fc * sinc * bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / i0b
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Degrades a 16 kHz clip to 8 kHz. Deterministic.
pub fn degrade_sim(clip: &AudioClip, strength: SimStrength) -> Result<AudioClip, CodecError> {
    if clip.sample_rate != WIDEBAND_RATE {
        return Err(CodecError::SampleRate {
            expected: WIDEBAND_RATE,
            got: clip.sample_rate,
        });
    }
    let taps = lowpass_taps(strength.cutoff_hz, WIDEBAND_RATE as f64);
    let x = &clip.samples;
    let n = x.len() as i64;
    let out = (0..x.len().div_ceil(2))
        .map(|m| {
            let centre = 2 * m as i64;
            let mut acc = 0.0;
            for (j, h) in taps.iter().enumerate() {
                let idx = centre + FILTER_HALF_WIDTH - j as i64;
                if (0..n).contains(&idx) {
                    acc += h * x[idx as usize];
                }
            }
            strength.quantize(acc)
        })
        .collect();
    Ok(AudioClip::new(out, NARROWBAND_RATE))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, n: usize) -> AudioClip {
        AudioClip::new(
            (0..n)
                .map(|t| 0.5 * (2.0 * PI * freq * t as f64 / 16000.0).sin())
                .collect(),
            16000,
        )
    }

    fn energy(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn passband_tone_snr() {
        let input = tone(1000.0, 16000);
        let out = degrade_sim(&input, SimStrength::default()).unwrap();
        assert_eq!(out.sample_rate, 8000);
        assert_eq!(out.len(), 8000);
        // Ideal output: the tone sampled at 8 kHz. Skip filter edge effects.
        let ideal: Vec<f64> = (0..8000).map(|m| input.samples[2 * m]).collect();
        let sig = energy(&ideal[200..7800]);
        let noise: f64 = ideal[200..7800]
            .iter()
            .zip(&out.samples[200..7800])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let snr = 10.0 * (sig / noise).log10();
        assert!(snr >= 25.0, "snr {snr}");
    }

    #[test]
    fn stopband_tone_is_removed() {
        let input = tone(6000.0, 16000);
        let out = degrade_sim(&input, SimStrength::default()).unwrap();
        // Compare per-sample energy so the rate change does not count.
        let e_in = energy(&input.samples) / input.len() as f64;
        let e_out = energy(&out.samples[100..7900]) / 7800.0;
        assert!(10.0 * (e_in / e_out.max(1e-30)).log10() >= 30.0);
    }

    #[test]
    fn zero_in_zero_out() {
        let out = degrade_sim(&AudioClip::silence(1000, 16000), SimStrength::default()).unwrap();
        assert!(out.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn rejects_other_rates() {
        assert!(matches!(
            degrade_sim(&AudioClip::silence(10, 8000), SimStrength::default()),
            Err(CodecError::SampleRate { .. })
        ));
    }

    #[test]
    fn peak_bounded_by_input_plus_step() {
        let clip = crate::synth::utterance(crate::synth::Voice::from_seed(1), 4, 1.0, 16000);
        for bits in [4, 6, 8] {
            let s = SimStrength { bits, ..SimStrength::default() };
            let out = degrade_sim(&clip, s).unwrap();
            let peak = clip.peak();
            assert!(out.peak() <= peak + s.step_at(peak), "bits {bits}: {} vs {peak}", out.peak());
        }
    }

    #[test]
    fn ladder_is_monotone() {
        let bits: Vec<u32> = Bitrate::ALL.iter().map(|b| SimStrength::for_bitrate(*b).bits).collect();
        assert!(bits.windows(2).all(|w| w[0] <= w[1]));
    }
}
