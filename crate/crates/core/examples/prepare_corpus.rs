//! Turns a corpus directory into aligned (truth, coded) pairs with a
//! speaker-disjoint split. Uses the degradation simulator unless `--codec` is
//! given, in which case the external AMR-NB tool (ffmpeg by default, or
//! `$AMRCONVNET_CODEC_BIN`) does the coding.
//!
//! ```text
//! cargo run --release --example prepare_corpus -- [corpus_dir] [out_dir] [--codec]
//! ```
//!
//! Without a corpus directory a synthetic one is written first.

use std::path::PathBuf;

use amrconvnet::audio_io::SOURCE_RATE;
use amrconvnet::codec_pipeline::{prepare_pairs, Bitrate, CodecTool, CodingMode, PrepareConfig, Split};
use amrconvnet::synth::write_corpus;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with("--")).collect();
    let external = std::env::args().any(|a| a == "--codec");
    let out = PathBuf::from(args.get(1).map(String::as_str).unwrap_or("prepared"));
    let corpus = match args.first() {
        Some(dir) => PathBuf::from(dir),
        None => {
            let dir = out.join("synthetic_corpus");
            write_corpus(&dir, 4, 10, 1.0, SOURCE_RATE)?;
            dir
        }
    };
    let mode = if external {
        CodingMode::External(CodecTool::default())
    } else {
        CodingMode::Simulated(None)
    };
    let outcome = prepare_pairs(&PrepareConfig {
        corpus_dir: corpus,
        out_dir: out,
        bitrates: vec![Bitrate::Kbps4_75, Bitrate::Kbps7_95, Bitrate::Kbps12_20],
        mode,
        seed: 0,
        jobs: None,
    })?;
    let m = &outcome.manifest;
    println!("manifest: {}", outcome.manifest_path.display());
    for split in [Split::Train, Split::Validation, Split::Test] {
        println!("  {split:?}: {} rows", m.rows_in(split).count());
    }
    println!("  bitrates: {:?}", m.bitrates().iter().map(|b| b.label()).collect::<Vec<_>>());
    if !outcome.skipped.is_empty() {
        println!("  skipped {} files, see skipped.log", outcome.skipped.len());
    }
    Ok(())
}
