//! Prepares a synthetic corpus at two bitrates, trains briefly and prints
//! the per-speaker, per-bitrate report of SNR and LSD for coded versus
//! enhanced audio. PESQ is added when `--pesq` is given and the tool
//! (`$AMRCONVNET_PESQ_BIN`, default `pesq`) is installed.
//!
//! ```text
//! cargo run --release --example evaluate_report -- [out_dir] [--pesq]
//! ```

use std::path::PathBuf;

use amrconvnet::audio_io::SOURCE_RATE;
use amrconvnet::codec_pipeline::{prepare_pairs, Bitrate, CodingMode, PrepareConfig};
use amrconvnet::eval_metrics::{evaluate_corpus, EvalConfig, MetricKind};
use amrconvnet::loss::LossConfig;
use amrconvnet::model::{Model, ModelConfig};
use amrconvnet::optim_train::{train, TrainConfig};
use amrconvnet::synth::write_corpus;

fn main() -> anyhow::Result<()> {
    let out = PathBuf::from(std::env::args().skip(1).find(|a| !a.starts_with("--")).unwrap_or_else(|| "eval_demo".into()));
    let pesq = std::env::args().any(|a| a == "--pesq");
    write_corpus(&out.join("corpus"), 3, 8, 0.5, SOURCE_RATE)?;
    let prepared = prepare_pairs(&PrepareConfig {
        corpus_dir: out.join("corpus"),
        out_dir: out.join("data"),
        bitrates: vec![Bitrate::Kbps4_75, Bitrate::Kbps12_20],
        mode: CodingMode::Simulated(None),
        seed: 0,
        jobs: None,
    })?;
    let config = TrainConfig {
        max_epochs: 8,
        batch_size: 4,
        patch_length: 1024,
        loss: LossConfig { lambda: 0.1, ..LossConfig::default() },
        ..TrainConfig::default()
    };
    let outcome = train(Model::build(ModelConfig::toy())?, &prepared.manifest, &config)?;

    let mut metrics = vec![MetricKind::Snr, MetricKind::Lsd];
    if pesq {
        metrics.push(MetricKind::Pesq);
    }
    let eval = EvalConfig { metrics, ..EvalConfig::default() };
    let report = evaluate_corpus(&outcome.model, &prepared.manifest, &[], &eval)?;
    print!("{}", report.to_tsv());
    for note in &report.notes {
        println!("note: {note}");
    }
    report.save(&out.join("report"))?;
    println!("report files in {}", out.join("report").display());
    Ok(())
}
