//! Magnitude spectrograms of a clip before and after the narrowband simulator,
//! written as CSV (one frame per row), plus the energy above 4 kHz.
//!
//! ```text
//! cargo run --example spectrogram -- [out_dir]
//! ```

use std::path::PathBuf;

use amrconvnet::audio_io::{resample, WIDEBAND_RATE};
use amrconvnet::codec_pipeline::{degrade_sim, SimStrength};
use amrconvnet::dsp::{stft_magnitude, Spectrogram, StftParams};
use amrconvnet::synth::{utterance, Voice};

fn high_band_share(spec: &Spectrogram, rate: f64) -> f64 {
    let n = spec.params().frame_size as f64;
    let (mut hi, mut total) = (0.0, 0.0);
    for f in 0..spec.frames() {
        for (b, m) in spec.row(f).iter().enumerate() {
            total += m * m;
            if b as f64 * rate / n > 4000.0 {
                hi += m * m;
            }
        }
    }
    hi / total
}

fn main() -> anyhow::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "spectrograms".into()));
    std::fs::create_dir_all(&out)?;
    let params = StftParams::default();
    let truth = utterance(Voice::from_seed(2), 7, 1.0, WIDEBAND_RATE);
    let coded = degrade_sim(&truth, SimStrength::default())?;
    let mut upsampled = resample(&coded, WIDEBAND_RATE)?;
    upsampled.fit_to_len(truth.len());

    for (name, clip) in [("truth", &truth), ("coded", &upsampled)] {
        let spec = stft_magnitude(&clip.samples, &params);
        let path = out.join(format!("{name}.csv"));
        spec.save_csv(&path)?;
        println!(
            "{}: {} frames x {} bins, {:.2e} of energy above 4 kHz",
            path.display(),
            spec.frames(),
            spec.bins(),
            high_band_share(&spec, WIDEBAND_RATE as f64)
        );
    }
    Ok(())
}
