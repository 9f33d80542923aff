//! Reads a WAV file (any rate, mono or multi-channel), converts it to 16 kHz
//! and 8 kHz and writes both next to the output stem.
//!
//! ```text
//! cargo run --example wav_resample -- input.wav out/clip
//! ```
//!
//! Without arguments, a synthetic 48 kHz utterance is used.

use amrconvnet::audio_io::{read_wav, resample, write_wav, NARROWBAND_RATE, SOURCE_RATE, WIDEBAND_RATE};
use amrconvnet::synth::{utterance, Voice};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let clip = match args.first() {
        Some(path) => read_wav(path)?,
        None => utterance(Voice::from_seed(0), 1, 1.5, SOURCE_RATE),
    };
    let stem = args.get(1).map(String::as_str).unwrap_or("resampled");
    println!("input: {} samples at {} Hz, peak {:.3}", clip.len(), clip.sample_rate, clip.peak());
    for rate in [WIDEBAND_RATE, NARROWBAND_RATE] {
        let out = resample(&clip, rate)?;
        let path = format!("{stem}_{}k.wav", rate / 1000);
        write_wav(&out, &path)?;
        println!("{path}: {} samples, {:.3} s", out.len(), out.duration_secs());
    }
    Ok(())
}
