use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    adam_step, derive_seed, load_pairs, make_batches, AdamHyper, Batch, Checkpoint, EpochRecord, TrainError, TrainLog,
    TrainingPair,
};
use crate::codec_pipeline::{Manifest, Split};
use crate::loss::{self, LossConfig, LossMode, LossValue};
use crate::model::Model;
use crate::tensor::{Graph, Tensor};

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const LOG_FILE: &str = "train_log.tsv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub patch_length: usize,
    pub seed: u64,
    pub adam: AdamHyper,
    pub loss: LossConfig,
    /// Where `best.ckpt`, `last.ckpt` and the log go; nothing is written when unset.
    pub checkpoint_dir: Option<PathBuf>,
    /// Optional hard cap on optimizer steps.
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 300,
            patience: 10,
            batch_size: 16,
            patch_length: 8192,
            seed: 0,
            adam: AdamHyper::default(),
            loss: LossConfig::default(),
            checkpoint_dir: None,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, multiple: usize) -> Result<(), TrainError> {
        let fail = |m: String| Err(TrainError::Config(m));
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.patch_length == 0 || self.patch_length % multiple != 0 {
            return fail(format!("patch_length {} must be a positive multiple of {multiple}", self.patch_length));
        }
        let a = &self.adam;
        if !(a.lr.is_finite() && a.lr > 0.0) {
            return fail(format!("learning rate must be positive, got {}", a.lr));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return fail("adam betas must lie in [0, 1) and eps must be positive".into());
        }
        self.loss.validate()?;
        Ok(())
    }
}

/// Result of a finished run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: Model,
    /// Full state after the last epoch.
    pub last: Checkpoint,
    pub log: TrainLog,
    pub stopped_early: bool,
}

/// Owns the model and optimizer state for one run.
pub struct Trainer {
    state: Checkpoint,
    config: TrainConfig,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate(model.config().length_multiple())?;
        let hyper = config.adam;
        Ok(Self {
            state: Checkpoint::initial(model, hyper),
            config,
        })
    }

    /// Continues from a saved state. Optimizer hyperparameters come from the
    /// checkpoint.
    pub fn resume(state: Checkpoint, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate(state.model.config().length_multiple())?;
        Ok(Self { state, config })
    }

    pub fn state(&self) -> &Checkpoint {
        &self.state
    }

    pub fn model(&self) -> &Model {
        &self.state.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Mean loss of `batch` with dropout off and no update.
    pub fn batch_loss(&self, batch: &Batch) -> Result<LossValue, TrainError> {
        let mut sum = LossValue::default();
        for (x, y) in batch.inputs.iter().zip(&batch.targets) {
            let pred = self.state.model.infer(x)?;
            let v = loss::combined_loss(&pred, y, &self.config.loss)?;
            sum.total += v.total;
            sum.reconstruction += v.reconstruction;
            sum.perceptual += v.perceptual;
        }
        let n = batch.len() as f64;
        Ok(LossValue {
            total: sum.total / n,
            reconstruction: sum.reconstruction / n,
            perceptual: sum.perceptual / n,
        })
    }

    /// One optimizer step on the batch-mean loss. Returns the loss before the
    /// update.
    pub fn step(&mut self, batch: &Batch) -> Result<LossValue, TrainError> {
        let model = &self.state.model;
        let step = self.state.step;
        let seed = self.config.seed;
        let cfg = &self.config.loss;
        let per_example: Vec<Result<(LossValue, Vec<Vec<f64>>), TrainError>> = batch
            .inputs
            .par_iter()
            .zip(&batch.targets)
            .enumerate()
            .map(|(i, (x, y))| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xd209, step * 1_000_003 + i as u64));
                let mut g = Graph::new();
                let input = g.leaf(Tensor::signal(x.clone()));
                let fwd = model.forward(&mut g, input, true, &mut rng)?;
                let vars = loss::combined_loss_graph(&mut g, fwd.output, y, cfg)?;
                g.backward(vars.total).map_err(crate::model::ModelError::from)?;
                let grads = fwd
                    .params
                    .iter()
                    .map(|&p| g.grad(p).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; g.value(p).numel()]))
                    .collect();
                Ok((vars.value(&g), grads))
            })
            .collect();

        let n = batch.len() as f64;
        let mut mean = LossValue::default();
        let mut grads: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.numel()]).collect();
        for r in per_example {
            let (v, g) = r?;
            mean.total += v.total / n;
            mean.reconstruction += v.reconstruction / n;
            mean.perceptual += v.perceptual / n;
            for (acc, gi) in grads.iter_mut().zip(g) {
                acc.iter_mut().zip(gi).for_each(|(a, b)| *a += b / n);
            }
        }
        if !mean.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch: self.state.epoch + 1,
                step: step + 1,
            });
        }
        adam_step(self.state.model.params_mut(), &grads, &mut self.state.adam)?;
        self.state.step += 1;
        Ok(mean)
    }

    /// Mean validation loss over whole utterances, eval mode. Scored with
    /// the combined objective whatever the training mode, so runs with
    /// different objectives stop on the same criterion.
    pub fn validate(&self, val: &[TrainingPair]) -> Result<f64, TrainError> {
        if val.is_empty() {
            return Err(TrainError::EmptySplit("validation"));
        }
        let cfg = LossConfig {
            mode: LossMode::Combined,
            ..self.config.loss
        };
        let model = &self.state.model;
        let scores: Vec<Result<f64, TrainError>> = val
            .par_iter()
            .map(|p| {
                let pred = model.infer(&p.input)?;
                Ok(loss::combined_loss(&pred, &p.target, &cfg)?.total)
            })
            .collect();
        let mut sum = 0.0;
        for s in scores {
            sum += s?;
        }
        Ok(sum / val.len() as f64)
    }

    fn steps_exhausted(&self) -> bool {
        self.config.max_steps.is_some_and(|m| self.state.step >= m)
    }

    /// True once early stopping, the epoch limit or the step cap applies.
    pub fn finished(&self) -> bool {
        self.state.epoch >= self.config.max_epochs || self.stopped_early() || self.steps_exhausted()
    }

    fn stopped_early(&self) -> bool {
        self.state.stale_epochs > self.config.patience
    }

    /// Trains one epoch, validates, updates early-stopping state and writes
    /// checkpoints when a directory is configured.
    pub fn run_epoch(&mut self, train: &[TrainingPair], val: &[TrainingPair]) -> Result<EpochRecord, TrainError> {
        let epoch = self.state.epoch + 1;
        let eb = make_batches(train, self.config.patch_length, self.config.batch_size, self.config.seed, epoch)?;
        let (mut recon, mut percept, mut n) = (0.0, 0.0, 0usize);
        for batch in &eb.batches {
            if self.steps_exhausted() {
                break;
            }
            let v = self.step(batch)?;
            recon += v.reconstruction;
            percept += v.perceptual;
            n += 1;
        }
        let val_total = self.validate(val)?;
        if !val_total.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                step: self.state.step,
            });
        }
        let n = n.max(1) as f64;
        let record = EpochRecord {
            epoch,
            steps: self.state.step,
            train_reconstruction: recon / n,
            train_perceptual: percept / n,
            val_total,
            batch_digest: eb.digest,
        };
        self.state.epoch = epoch;
        self.state.log.records.push(record.clone());
        let improved = self.state.best_val.is_none_or(|b| val_total < b);
        if improved {
            self.state.best_val = Some(val_total);
            self.state.best_epoch = Some(epoch);
            self.state.stale_epochs = 0;
            self.state.best_params = Some(self.state.model.params().to_vec());
        } else {
            self.state.stale_epochs += 1;
        }
        info!(
            "epoch {epoch}: train recon {:.4e} percept {:.4e}, val {:.4e}{}",
            record.train_reconstruction,
            record.train_perceptual,
            val_total,
            if improved { " (best)" } else { "" }
        );
        if let Some(dir) = &self.config.checkpoint_dir {
            self.write_artifacts(dir, improved)?;
        }
        Ok(record)
    }

    fn write_artifacts(&self, dir: &Path, improved: bool) -> Result<(), TrainError> {
        std::fs::create_dir_all(dir).map_err(|e| TrainError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        self.state.save(dir.join(LAST_CHECKPOINT))?;
        if improved {
            let mut best = self.state.clone();
            best.best_params = None;
            best.save(dir.join(BEST_CHECKPOINT))?;
        }
        self.state.log.save(dir.join(LOG_FILE))
    }

    /// Runs epochs until [`Trainer::finished`].
    pub fn fit(&mut self, train: &[TrainingPair], val: &[TrainingPair]) -> Result<(), TrainError> {
        while !self.finished() {
            self.run_epoch(train, val)?;
        }
        Ok(())
    }

    pub fn finish(self) -> TrainOutcome {
        let stopped_early = self.stopped_early();
        TrainOutcome {
            model: self.state.best_model(),
            log: self.state.log.clone(),
            last: self.state,
            stopped_early,
        }
    }
}

/// Trains `model` on the manifest's train split with early stopping on its
/// validation split.
pub fn train(model: Model, manifest: &Manifest, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let mut trainer = Trainer::new(model, config.clone())?;
    let train = load_pairs(manifest, Split::Train)?;
    let val = load_pairs(manifest, Split::Validation)?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    trainer.fit(&train, &val)?;
    Ok(trainer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::Rng;

    fn tiny_model() -> Model {
        Model::build(ModelConfig {
            channels: vec![4, 8],
            kernel_sizes: vec![9, 9],
            dropout_rate: 0.0,
            ..ModelConfig::toy()
        })
        .unwrap()
    }

    fn pairs(n: usize, len: usize, seed: u64) -> Vec<TrainingPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let t: Vec<f64> = (0..len).map(|k| 0.3 * (k as f64 * 0.05 * (i + 1) as f64).sin()).collect();
                let x = t.iter().map(|v| v + rng.gen_range(-0.02..0.02)).collect();
                TrainingPair::new(format!("s{i}"), x, t).unwrap()
            })
            .collect()
    }

    fn config() -> TrainConfig {
        TrainConfig {
            max_epochs: 3,
            patience: 5,
            batch_size: 2,
            patch_length: 128,
            seed: 1,
            loss: LossConfig {
                stft: crate::dsp::StftParams::new(64, 16).unwrap(),
                ..LossConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn small_step_descends() {
        let data = pairs(2, 256, 0);
        let mut cfg = config();
        cfg.adam.lr = 1e-5;
        let mut t = Trainer::new(tiny_model(), cfg).unwrap();
        let batch = &make_batches(&data, 128, 4, 0, 1).unwrap().batches[0];
        let before = t.batch_loss(batch).unwrap().total;
        let reported = t.step(batch).unwrap().total;
        let after = t.batch_loss(batch).unwrap().total;
        assert_eq!(before, reported);
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn identical_seeds_identical_logs() {
        let data = pairs(3, 400, 1);
        let run = || {
            let mut t = Trainer::new(tiny_model(), config()).unwrap();
            t.fit(&data, &data[..1]).unwrap();
            t.finish().log.to_tsv()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn resume_is_trajectory_exact() {
        let data = pairs(3, 400, 2);
        let mut full = Trainer::new(tiny_model(), config()).unwrap();
        full.fit(&data, &data[..1]).unwrap();

        let mut first = Trainer::new(tiny_model(), TrainConfig { max_epochs: 1, ..config() }).unwrap();
        first.fit(&data, &data[..1]).unwrap();
        let bytes = first.state().to_bytes();
        let mut resumed = Trainer::resume(Checkpoint::from_bytes(&bytes).unwrap(), config()).unwrap();
        resumed.fit(&data, &data[..1]).unwrap();
        assert_eq!(resumed.state(), full.state());
    }

    #[test]
    fn patience_zero_stops_after_first_regression() {
        let data = pairs(2, 256, 3);
        let mut t = Trainer::new(tiny_model(), TrainConfig { patience: 0, max_epochs: 50, ..config() }).unwrap();
        // Huge steps make validation loss rise quickly.
        t.state.adam.hyper.lr = 0.5;
        t.fit(&data, &data[..1]).unwrap();
        let out = t.finish();
        assert!(out.stopped_early);
        let recs = &out.log.records;
        let best = recs.iter().map(|r| r.val_total).fold(f64::INFINITY, f64::min);
        let last = recs.last().unwrap();
        assert!(last.val_total >= best);
        assert!(recs.len() < 50);
        // The returned model scores the best recorded validation loss.
        let v = Trainer::new(out.model, config()).unwrap().validate(&data[..1]).unwrap();
        assert_eq!(v, best);
    }

    #[test]
    fn writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let data = pairs(2, 256, 4);
        let mut t = Trainer::new(
            tiny_model(),
            TrainConfig {
                checkpoint_dir: Some(dir.path().to_path_buf()),
                max_epochs: 2,
                ..config()
            },
        )
        .unwrap();
        t.fit(&data, &data[..1]).unwrap();
        let last = Checkpoint::load(dir.path().join(LAST_CHECKPOINT)).unwrap();
        assert_eq!(&last, t.state());
        assert!(dir.path().join(BEST_CHECKPOINT).exists());
        let log = std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
        assert_eq!(TrainLog::parse(&log).unwrap(), t.state().log);
    }

    #[test]
    fn step_cap_counts() {
        let data = pairs(2, 512, 5);
        let mut t = Trainer::new(tiny_model(), TrainConfig { max_steps: Some(3), max_epochs: 100, ..config() }).unwrap();
        t.fit(&data, &data[..1]).unwrap();
        assert_eq!(t.state().step, 3);
    }

    #[test]
    fn rejects_bad_patch() {
        assert!(Trainer::new(tiny_model(), TrainConfig { patch_length: 130, ..config() }).is_err());
    }
}
