//! Deterministic speech-like test signals.
//!
//! Utterances are strings of voiced syllables: a harmonic source whose
//! fundamental drifts within each syllable, shaped by a formant envelope with
//! a spectral tilt, plus occasional noise-like fricatives. They stand in for a
//! recorded corpus in examples and tests.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio_io::{self, AudioClip, AudioError};

/// Formant centre frequencies (Hz) of a few vowels.
const VOWELS: [[f64; 4]; 6] = [
    [730.0, 1090.0, 2440.0, 3400.0],
    [270.0, 2290.0, 3010.0, 3700.0],
    [530.0, 1840.0, 2480.0, 3500.0],
    [570.0, 840.0, 2410.0, 3300.0],
    [300.0, 870.0, 2240.0, 3200.0],
    [660.0, 1720.0, 2410.0, 3600.0],
];
const FORMANT_GAINS: [f64; 4] = [1.0, 0.6, 0.35, 0.25];
const FORMANT_BANDWIDTH: f64 = 120.0;
const MAX_HARMONIC_HZ: f64 = 10_000.0;

/// Per-speaker voice parameters.
#[derive(Debug, Clone, Copy)]
pub struct Voice {
    pub f0: f64,
    pub formant_scale: f64,
}

impl Voice {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_70_1ce);
        Self {
            f0: rng.gen_range(95.0..230.0),
            formant_scale: rng.gen_range(0.9..1.15),
        }
    }
}

fn formant_envelope(freq: f64, formants: &[f64; 4], scale: f64) -> f64 {
    let mut g = 0.02;
    for (f, a) in formants.iter().zip(FORMANT_GAINS) {
        let d = (freq - f * scale) / FORMANT_BANDWIDTH;
        g += a * (-0.5 * d * d).exp();
    }
    // About -6 dB per octave above 500 Hz.
    g / (1.0 + freq / 500.0)
}

/// Generates `duration_secs` of speech-like audio for `voice`, peak-normalized
/// to `0.5`.
pub fn utterance(voice: Voice, seed: u64, duration_secs: f64, sample_rate: u32) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = sample_rate as f64;
    let total = (duration_secs * rate).round() as usize;
    let mut out = vec![0.0; total];
    let nyquist = rate / 2.0;
    let mut pos = rng.gen_range(0.02..0.08) * rate;
    while (pos as usize) < total {
        let start = pos as usize;
        let fricative = rng.gen_bool(0.2);
        let len_secs = if fricative {
            rng.gen_range(0.06..0.12)
        } else {
            rng.gen_range(0.12..0.3)
        };
        let len = ((len_secs * rate) as usize).min(total - start);
        if fricative {
            let band = rng.gen_range(2500.0..4500.0);
            // One-pole high-pass on white noise.
            let a = (-2.0 * PI * band / rate).exp();
            let (mut prev_in, mut prev_out) = (0.0, 0.0);
            for i in 0..len {
                let w: f64 = rng.gen_range(-1.0..1.0);
                let y = a * (prev_out + w - prev_in);
                prev_in = w;
                prev_out = y;
                let env = (PI * i as f64 / len as f64).sin();
                out[start + i] += 0.08 * env * y;
            }
        } else {
            let formants = VOWELS[rng.gen_range(0..VOWELS.len())];
            let f0_start = voice.f0 * rng.gen_range(0.85..1.15);
            let f0_end = voice.f0 * rng.gen_range(0.85..1.15);
            let n_harm = (MAX_HARMONIC_HZ.min(nyquist) / f0_start.max(f0_end)).floor() as usize;
            let amps: Vec<f64> = (1..=n_harm)
                .map(|k| formant_envelope(k as f64 * f0_start, &formants, voice.formant_scale))
                .collect();
            let phases: Vec<f64> = (0..n_harm).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
            let mut phase = 0.0;
            for i in 0..len {
                let frac = i as f64 / len as f64;
                let f0 = f0_start + (f0_end - f0_start) * frac;
                phase += 2.0 * PI * f0 / rate;
                let env = (PI * frac).sin().powf(0.6);
                let mut s = 0.0;
                for (k, (a, p)) in amps.iter().zip(&phases).enumerate() {
                    s += a * ((k + 1) as f64 * phase + p).sin();
                }
                out[start + i] += env * s;
            }
        }
        pos += len as f64 + rng.gen_range(0.01..0.12) * rate;
    }
    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|s| *s *= 0.5 / peak);
    }
    AudioClip::new(out, sample_rate)
}

/// Writes a toy corpus laid out as `<dir>/<speaker>/<speaker>_<nnn>.wav`.
/// Returns the utterance ids in sorted order.
pub fn write_corpus(
    dir: &Path,
    speakers: usize,
    per_speaker: usize,
    duration_secs: f64,
    sample_rate: u32,
) -> Result<Vec<String>, AudioError> {
    let mut ids = Vec::new();
    for s in 0..speakers {
        let speaker = format!("p{:03}", s + 1);
        let voice = Voice::from_seed(s as u64);
        let sdir = dir.join(&speaker);
        std::fs::create_dir_all(&sdir).map_err(|e| AudioError::Write {
            path: sdir.clone(),
            detail: e.to_string(),
        })?;
        for u in 0..per_speaker {
            let id = format!("{speaker}_{:03}", u + 1);
            let clip = utterance(voice, (s * 1000 + u) as u64, duration_secs, sample_rate);
            audio_io::write_wav(&clip, sdir.join(format!("{id}.wav")))?;
            ids.push(id);
        }
    }
    ids.sort();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let v = Voice::from_seed(3);
        let a = utterance(v, 1, 0.5, 16000);
        let b = utterance(v, 1, 0.5, 16000);
        assert_eq!(a, b);
        assert_eq!(a.len(), 8000);
        assert!((a.peak() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn has_energy_above_narrowband_cutoff() {
        let clip = utterance(Voice::from_seed(0), 2, 1.0, 16000);
        let spec = crate::dsp::stft_magnitude(&clip.samples, &crate::dsp::StftParams::default());
        let (mut lo, mut hi) = (0.0, 0.0);
        for f in 0..spec.frames() {
            for (b, m) in spec.row(f).iter().enumerate() {
                if b * 16000 / 512 > 4000 {
                    hi += m * m;
                } else {
                    lo += m * m;
                }
            }
        }
        assert!(hi > 1e-4 * lo && hi < lo, "high/low energy ratio {}", hi / lo);
    }
}
