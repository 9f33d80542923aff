//! Trains the toy network on simulator-degraded synthetic clips, stops
//! halfway, writes a checkpoint, and resumes from it to the end.
//!
//! ```text
//! cargo run --release --example train_toy -- [epochs] [run_dir]
//! ```

use std::path::PathBuf;

use amrconvnet::audio_io::{resample, WIDEBAND_RATE};
use amrconvnet::codec_pipeline::{degrade_sim, SimStrength};
use amrconvnet::dsp::StftParams;
use amrconvnet::eval_metrics::lsd_db;
use amrconvnet::loss::{reconstruction_loss, LossConfig};
use amrconvnet::model::{Model, ModelConfig};
use amrconvnet::optim_train::{Checkpoint, TrainConfig, Trainer, TrainingPair};
use amrconvnet::synth::{utterance, Voice};

fn pair(i: u64) -> anyhow::Result<TrainingPair> {
    let truth = utterance(Voice::from_seed(i % 2), 100 + i, 0.5, WIDEBAND_RATE);
    let coded = degrade_sim(&truth, SimStrength::default())?;
    let mut input = resample(&coded, WIDEBAND_RATE)?;
    input.fit_to_len(truth.len());
    Ok(TrainingPair::new(format!("u{i}"), input.samples, truth.samples)?)
}

fn main() -> anyhow::Result<()> {
    let epochs: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(40);
    let run = PathBuf::from(std::env::args().nth(2).unwrap_or_else(|| "toy_run".into()));
    let pairs = (0..6).map(pair).collect::<anyhow::Result<Vec<_>>>()?;
    let (train, val) = pairs.split_at(5);
    let config = TrainConfig {
        max_epochs: epochs,
        patience: epochs,
        batch_size: 1,
        patch_length: 512,
        loss: LossConfig { lambda: 0.1, ..LossConfig::default() },
        checkpoint_dir: Some(run.clone()),
        ..TrainConfig::default()
    };
    let baseline: f64 = val.iter().map(|p| reconstruction_loss(&p.input, &p.target).unwrap()).sum::<f64>() / val.len() as f64;
    println!("held-out MSE of the coded input: {baseline:.3e}");

    let mut first = Trainer::new(Model::build(ModelConfig::toy())?, TrainConfig { max_epochs: epochs / 2, ..config.clone() })?;
    first.fit(train, val)?;
    let ckpt = run.join("halfway.ckpt");
    first.state().save(&ckpt)?;
    println!("stopped after epoch {}, checkpoint {}", first.state().epoch, ckpt.display());

    let mut trainer = Trainer::resume(Checkpoint::load(&ckpt)?, config)?;
    trainer.fit(train, val)?;
    let outcome = trainer.finish();
    for r in outcome.log.records.iter().step_by((epochs / 8).max(1)) {
        println!(
            "epoch {:>3} step {:>5} reconstruction {:.3e} perceptual {:.3e} val {:.3e}",
            r.epoch, r.steps, r.train_reconstruction, r.train_perceptual, r.val_total
        );
    }
    let enhanced: f64 = val
        .iter()
        .map(|p| reconstruction_loss(&outcome.model.infer(&p.input).unwrap(), &p.target).unwrap())
        .sum::<f64>()
        / val.len() as f64;
    println!("held-out MSE after training: {enhanced:.3e}");
    let stft = StftParams::default();
    for p in val {
        let out = outcome.model.infer(&p.input)?;
        println!(
            "{}: LSD coded {:.2} dB, enhanced {:.2} dB",
            p.id,
            lsd_db(&p.target, &p.input, &stft)?,
            lsd_db(&p.target, &out, &stft)?
        );
    }
    Ok(())
}
