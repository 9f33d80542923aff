#![allow(dead_code)]

use std::path::Path;

use amrconvnet::audio_io::{resample, SOURCE_RATE};
use amrconvnet::codec_pipeline::{
    degrade_sim, prepare_pairs, Bitrate, CodingMode, PrepareConfig, PrepareOutcome, SimStrength,
};
use amrconvnet::optim_train::TrainingPair;
use amrconvnet::synth::{utterance, write_corpus, Voice};

/// Writes a synthetic corpus under `root/corpus` and prepares it with the
/// simulator into `root/data`.
pub fn prepared_corpus(
    root: &Path,
    speakers: usize,
    per_speaker: usize,
    secs: f64,
    bitrates: &[Bitrate],
) -> PrepareOutcome {
    let corpus = root.join("corpus");
    write_corpus(&corpus, speakers, per_speaker, secs, SOURCE_RATE).unwrap();
    prepare_pairs(&PrepareConfig {
        corpus_dir: corpus,
        out_dir: root.join("data"),
        bitrates: bitrates.to_vec(),
        mode: CodingMode::Simulated(None),
        seed: 0,
        jobs: None,
    })
    .unwrap()
}

/// A simulator-degraded pair whose input is the coded clip upsampled to 16 kHz.
pub fn sim_pair(voice_seed: u64, seed: u64, secs: f64) -> TrainingPair {
    let truth = utterance(Voice::from_seed(voice_seed), seed, secs, 16000);
    let coded = degrade_sim(&truth, SimStrength::default()).unwrap();
    let mut input = resample(&coded, 16000).unwrap();
    input.fit_to_len(truth.len());
    TrainingPair::new(format!("p{voice_seed:03}_{seed:03}"), input.samples, truth.samples).unwrap()
}

/// Writes a minimal toy run configuration next to `data/`.
pub fn toy_config(root: &Path, extra: &str) -> std::path::PathBuf {
    let path = root.join("toy.toml");
    std::fs::write(
        &path,
        format!(
            "[paths]\ndata_dir = \"data\"\nrun_dir = \"runs\"\n\n\
             [model]\nlevels = 2\nchannels = [8, 16]\nkernel_sizes = [9, 9]\n\n\
             [train]\nmax_epochs = 2\nbatch_size = 4\npatch_length = 1024\n\n\
             [train.loss]\nlambda = 0.1\n{extra}"
        ),
    )
    .unwrap();
    path
}
