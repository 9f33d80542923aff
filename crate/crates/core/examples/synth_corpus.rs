//! Writes a small speech-like corpus for trying the pipeline without
//! recorded data.
//!
//! ```text
//! cargo run --example synth_corpus -- toy_corpus [speakers] [utterances] [seconds]
//! ```

use amrconvnet::audio_io::SOURCE_RATE;
use amrconvnet::synth::write_corpus;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = args.first().map(String::as_str).unwrap_or("toy_corpus");
    let speakers = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(2);
    let per = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let secs = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or(1.0);
    let ids = write_corpus(dir.as_ref(), speakers, per, secs, SOURCE_RATE)?;
    println!("wrote {} utterances at {SOURCE_RATE} Hz under {dir}", ids.len());
    Ok(())
}
