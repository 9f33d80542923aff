use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{runtime, AblateArgs, CliError, EnhanceArgs, EvaluateArgs, PrepareArgs, RunConfig, TrainArgs};
use crate::audio_io::{self, WIDEBAND_RATE};
use crate::codec_pipeline::{prepare_pairs, Bitrate, CodingMode, Manifest, PrepareConfig, Split};
use crate::dsp::{self, StftParams};
use crate::eval_metrics::{evaluate_corpus, EvalConfig, MetricError};
use crate::loss::LossMode;
use crate::model::Model;
use crate::optim_train::{
    load_pairs, Checkpoint, TrainError, TrainOutcome, Trainer, TrainingPair, BEST_CHECKPOINT, LOG_FILE,
};

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} {} not found", path.display())))
    }
}

fn with_jobs<T>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    match jobs {
        Some(n) if n > 0 => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(runtime)?
            .install(f)),
        _ => Ok(f()),
    }
}

pub(super) fn prepare(args: &PrepareArgs, jobs: Option<usize>) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if !args.corpus.is_dir() {
        return Err(CliError::Config(format!("corpus directory {} not found", args.corpus.display())));
    }
    let bitrates = if args.bitrates.is_empty() {
        cfg.codec.bitrates.clone()
    } else {
        let mut b = args.bitrates.clone();
        b.sort();
        b.dedup();
        b
    };
    let mode = if args.sim || cfg.codec.simulate {
        CodingMode::Simulated(cfg.codec.sim)
    } else {
        CodingMode::External(cfg.codec.tool.clone())
    };
    let pc = PrepareConfig {
        corpus_dir: args.corpus.clone(),
        out_dir: args.out.clone(),
        bitrates,
        mode,
        seed: args.seed.unwrap_or(cfg.codec.split_seed),
        jobs: jobs.or(cfg.jobs),
    };
    let outcome = prepare_pairs(&pc).map_err(runtime)?;
    let count = |s: Split| {
        let mut ids: Vec<&str> = outcome.manifest.rows_in(s).map(|r| r.id.as_str()).collect();
        ids.dedup();
        ids.len()
    };
    eprintln!(
        "{} pairs: {} train / {} val / {} test utterances, {} skipped",
        outcome.manifest.len(),
        count(Split::Train),
        count(Split::Validation),
        count(Split::Test),
        outcome.skipped.len()
    );
    println!("{}", outcome.manifest_path.display());
    Ok(())
}

struct Data {
    train: Vec<TrainingPair>,
    val: Vec<TrainingPair>,
    manifest: Manifest,
}

fn load_data(manifest_path: &Path, bitrate: Option<Bitrate>) -> Result<Data, CliError> {
    let mut manifest = Manifest::read(manifest_path).map_err(runtime)?;
    if let Some(b) = bitrate {
        manifest = manifest.at_bitrate(b);
    }
    let train = load_pairs(&manifest, Split::Train).map_err(runtime)?;
    let val = load_pairs(&manifest, Split::Validation).map_err(runtime)?;
    if train.is_empty() {
        return Err(runtime(TrainError::EmptySplit("train")));
    }
    if val.is_empty() {
        return Err(runtime(TrainError::EmptySplit("validation")));
    }
    Ok(Data { train, val, manifest })
}

/// Runs epochs to completion, printing one line per epoch.
fn run_training(mut trainer: Trainer, data: &Data, tag: &str) -> Result<TrainOutcome, CliError> {
    let max = trainer.config().max_epochs;
    while !trainer.finished() {
        let r = trainer.run_epoch(&data.train, &data.val).map_err(runtime)?;
        let best = trainer.state().best_epoch == Some(r.epoch);
        println!(
            "{tag}epoch {}/{max}\tsteps {}\ttrain_reconstruction {:.4e}\ttrain_perceptual {:.4e}\tval_total {:.4e}{}",
            r.epoch,
            r.steps,
            r.train_reconstruction,
            r.train_perceptual,
            r.val_total,
            if best { "\tbest" } else { "" }
        );
    }
    Ok(trainer.finish())
}

fn train_config(cfg: &RunConfig, out: PathBuf, loss: Option<LossMode>, epochs: Option<usize>) -> Result<crate::optim_train::TrainConfig, CliError> {
    let mut t = cfg.train.clone();
    if let Some(m) = loss {
        t.loss.mode = m;
    }
    if let Some(e) = epochs {
        t.max_epochs = e;
    }
    t.checkpoint_dir = Some(out);
    t.validate(cfg.model.length_multiple())
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(t)
}

pub(super) fn train(args: &TrainArgs, jobs: Option<usize>) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config)?;
    let manifest = args.manifest.clone().unwrap_or_else(|| cfg.manifest_path());
    require_file(&manifest, "manifest")?;
    if let Some(r) = &args.resume {
        require_file(r, "checkpoint")?;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.train.checkpoint_dir.clone())
        .unwrap_or_else(|| cfg.paths.run_dir.clone());
    let tc = train_config(&cfg, out.clone(), args.loss, args.epochs)?;
    with_jobs(jobs.or(cfg.jobs), || {
        let trainer = match &args.resume {
            Some(path) => {
                let state = Checkpoint::load(path).map_err(runtime)?;
                if state.model.config() != &cfg.model {
                    log::warn!("model config differs from the checkpoint; using the checkpoint's");
                }
                eprintln!("resuming after epoch {} (step {})", state.epoch, state.step);
                Trainer::resume(state, tc).map_err(runtime)?
            }
            None => Trainer::new(Model::build(cfg.model.clone()).map_err(runtime)?, tc).map_err(runtime)?,
        };
        let data = load_data(&manifest, args.bitrate)?;
        let outcome = run_training(trainer, &data, "")?;
        eprintln!(
            "{} epochs{}; best checkpoint {}",
            outcome.log.records.len(),
            if outcome.stopped_early { " (early stop)" } else { "" },
            out.join(BEST_CHECKPOINT).display()
        );
        Ok(())
    })?
}

pub(super) fn enhance(args: &EnhanceArgs) -> Result<(), CliError> {
    require_file(&args.checkpoint, "checkpoint")?;
    let model = Checkpoint::load(&args.checkpoint).map_err(runtime)?.best_model();
    std::fs::create_dir_all(&args.out).map_err(runtime)?;
    let stft = StftParams::default();
    let mut ok = 0usize;
    for input in &args.inputs {
        let stem = input.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let result = (|| -> Result<PathBuf, String> {
            let coded = audio_io::read_wav(input).map_err(|e| e.to_string())?;
            let enhanced = model.enhance(&coded).map_err(|e| e.to_string())?;
            let path = args.out.join(format!("{stem}.wav"));
            audio_io::write_wav(&enhanced, &path).map_err(|e| e.to_string())?;
            if args.dump_spectrogram {
                let up = audio_io::resample(&coded, WIDEBAND_RATE).map_err(|e| e.to_string())?;
                let dump = |name: &str, x: &[f64]| {
                    dsp::stft_magnitude(x, &stft)
                        .save_csv(args.out.join(format!("{stem}.{name}.csv")))
                        .map_err(|e| e.to_string())
                };
                dump("coded", &up.samples)?;
                dump("enhanced", &enhanced.samples)?;
                if let Some(dir) = &args.truth_dir {
                    let truth = audio_io::read_wav(dir.join(format!("{stem}.wav"))).map_err(|e| e.to_string())?;
                    dump("truth", &truth.samples)?;
                }
            }
            Ok(path)
        })();
        match result {
            Ok(path) => {
                ok += 1;
                println!("{}", path.display());
            }
            Err(e) => eprintln!("skipping {}: {e}", input.display()),
        }
    }
    if ok == 0 {
        return Err(CliError::Runtime("no input could be enhanced".into()));
    }
    Ok(())
}

pub(super) fn evaluate(args: &EvaluateArgs, jobs: Option<usize>) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    require_file(&args.checkpoint, "checkpoint")?;
    require_file(&args.manifest, "manifest")?;
    let mut ec = cfg.eval.clone();
    if !args.metrics.is_empty() {
        ec.metrics = args.metrics.clone();
        ec.metrics.sort();
        ec.metrics.dedup();
    }
    ec.jobs = jobs.or(cfg.jobs).or(ec.jobs);
    let out = args.out.clone().unwrap_or_else(|| {
        args.checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join("eval")
    });
    let model = Checkpoint::load(&args.checkpoint).map_err(runtime)?.best_model();
    let manifest = Manifest::read(&args.manifest).map_err(runtime)?;
    let report = evaluate_corpus(&model, &manifest, &args.bitrates, &ec).map_err(runtime)?;
    print!("{}", report.to_tsv());
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    report.save(&out).map_err(runtime)?;
    eprintln!("report written to {}", out.display());
    Ok(())
}

fn mean_test_lsd(model: &Model, manifest: &Manifest) -> Result<Option<f64>, CliError> {
    let ec = EvalConfig {
        metrics: vec![crate::eval_metrics::MetricKind::Lsd],
        ..EvalConfig::default()
    };
    match evaluate_corpus(model, manifest, &[], &ec) {
        Ok(r) => {
            let vals: Vec<f64> = r.utterances.iter().filter_map(|u| u.enhanced.lsd_db).collect();
            Ok((!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64))
        }
        Err(MetricError::NoTestUtterances) => Ok(None),
        Err(e) => Err(runtime(e)),
    }
}

pub(super) fn ablate(args: &AblateArgs, jobs: Option<usize>) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config)?;
    let manifest = args.manifest.clone().unwrap_or_else(|| cfg.manifest_path());
    require_file(&manifest, "manifest")?;
    let out = args.out.clone().unwrap_or_else(|| cfg.paths.run_dir.join("ablation"));
    let configs = LossMode::ALL
        .iter()
        .map(|&m| train_config(&cfg, out.join(m.as_str()), Some(m), args.epochs).map(|c| (m, c)))
        .collect::<Result<Vec<_>, _>>()?;
    with_jobs(jobs.or(cfg.jobs), || {
        let data = load_data(&manifest, args.bitrate)?;
        let mut arms = Vec::new();
        for (mode, tc) in configs {
            let model = Model::build(cfg.model.clone()).map_err(runtime)?;
            let trainer = Trainer::new(model, tc).map_err(runtime)?;
            let outcome = run_training(trainer, &data, &format!("[{}] ", mode.as_str()))?;
            let lsd = mean_test_lsd(&outcome.model, &data.manifest)?;
            arms.push((mode, outcome, lsd));
        }
        let table = comparison_table(&arms);
        let write = |name: &str, body: &str| {
            std::fs::write(out.join(name), body).map_err(runtime)
        };
        write("ablation.tsv", &table)?;
        write("trajectories.tsv", &trajectories(&arms))?;
        print!("{table}");
        if let Some(line) = convergence_note(&arms) {
            eprintln!("{line}");
        }
        for (mode, _, _) in &arms {
            eprintln!("{}", out.join(mode.as_str()).join(LOG_FILE).display());
        }
        Ok(())
    })?
}

type Arm = (LossMode, TrainOutcome, Option<f64>);

/// First epoch whose training reconstruction loss is at or below `target`.
fn epochs_to(outcome: &TrainOutcome, target: f64) -> Option<usize> {
    outcome
        .log
        .records
        .iter()
        .find(|r| r.train_reconstruction <= target)
        .map(|r| r.epoch)
}

fn recon_target(arms: &[Arm]) -> Option<f64> {
    arms.iter()
        .find(|a| a.0 == LossMode::ReconstructionOnly)
        .and_then(|a| a.1.log.last())
        .map(|r| r.train_reconstruction)
}

fn comparison_table(arms: &[Arm]) -> String {
    let target = recon_target(arms);
    let mut out = String::from(
        "loss\tmode\tepochs\tsteps\tfinal_train_reconstruction\tfinal_train_perceptual\tbest_val_total\ttest_lsd_db\tepochs_to_reconstruction_target\n",
    );
    for (mode, o, lsd) in arms {
        let last = o.log.last();
        let best = o.log.records.iter().map(|r| r.val_total).fold(f64::INFINITY, f64::min);
        let fmt_opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6e}\t{:.6e}\t{:.6e}\t{}\t{}",
            mode.label(),
            mode.as_str(),
            o.log.records.len(),
            last.map_or(0, |r| r.steps),
            last.map_or(f64::NAN, |r| r.train_reconstruction),
            last.map_or(f64::NAN, |r| r.train_perceptual),
            best,
            fmt_opt(lsd.map(|v| format!("{v:.4}"))),
            fmt_opt(target.and_then(|t| epochs_to(o, t)).map(|e| e.to_string())),
        );
    }
    out
}

fn trajectories(arms: &[Arm]) -> String {
    let mut out = String::from("loss\tepoch\tsteps\ttrain_reconstruction\ttrain_perceptual\tval_total\tbatch_digest\n");
    for (mode, o, _) in arms {
        for r in &o.log.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:e}\t{:e}\t{:e}\t{}",
                mode.as_str(),
                r.epoch,
                r.steps,
                r.train_reconstruction,
                r.train_perceptual,
                r.val_total,
                r.batch_digest
            );
        }
    }
    out
}

fn convergence_note(arms: &[Arm]) -> Option<String> {
    let target = recon_target(arms)?;
    let recon = arms.iter().find(|a| a.0 == LossMode::ReconstructionOnly)?;
    let comb = arms.iter().find(|a| a.0 == LossMode::Combined)?;
    let r = epochs_to(&recon.1, target)?;
    Some(match epochs_to(&comb.1, target) {
        Some(c) => format!(
            "trend: combined reached the reconstruction-only final training reconstruction loss ({target:.3e}) at epoch {c}, reconstruction-only at epoch {r}"
        ),
        None => format!("trend: combined never reached the reconstruction-only final training reconstruction loss ({target:.3e})"),
    })
}
