mod common;

use std::path::Path;
use std::process::{Command, Output};

use amrconvnet::codec_pipeline::Bitrate;
use amrconvnet::optim_train::{TrainLog, BEST_CHECKPOINT, LOG_FILE};

fn amrconvnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amrconvnet"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(amrconvnet(dir.path(), &[]).status.code(), Some(1));
    assert_eq!(amrconvnet(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(amrconvnet(dir.path(), &["--help"]).status.code(), Some(0));

    let bad = amrconvnet(dir.path(), &["prepare", "corpus", "out", "--sim", "--bitrate", "9.0"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("12.2"), "{}", stderr(&bad));

    let missing = amrconvnet(dir.path(), &["train", "--config", "nope.toml"]);
    assert_eq!(missing.status.code(), Some(1));

    std::fs::write(dir.path().join("bad.toml"), "[train]\nlearning_rate = 1\n").unwrap();
    assert_eq!(amrconvnet(dir.path(), &["train", "--config", "bad.toml"]).status.code(), Some(1));
}

#[test]
fn prepare_train_enhance_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    amrconvnet::synth::write_corpus(&root.join("corpus"), 2, 10, 0.3, 48000).unwrap();
    let prep = amrconvnet(root, &["prepare", "corpus", "data", "--sim", "--bitrate", "4.75,12.2"]);
    assert_eq!(prep.status.code(), Some(0), "{}", stderr(&prep));
    let manifest = std::fs::read_to_string(root.join("data/manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().count(), 1 + 2 * 20);

    common::toy_config(root, "");
    let train = amrconvnet(root, &["train", "--config", "toy.toml", "--out", "run", "--epochs", "2"]);
    assert_eq!(train.status.code(), Some(0), "{}", stderr(&train));
    let log = TrainLog::parse(&std::fs::read_to_string(root.join("run").join(LOG_FILE)).unwrap()).unwrap();
    assert_eq!(log.records.len(), 2);
    assert!(log.records.len() <= 20);
    let checkpoint = root.join("run").join(BEST_CHECKPOINT);
    assert!(checkpoint.exists());

    // One 8 kHz file, and one at the wrong rate that should be skipped.
    let coded = std::fs::read_dir(root.join("data/coded/4.75k")).unwrap().next().unwrap().unwrap().path();
    let truth = std::fs::read_dir(root.join("data/truth")).unwrap().next().unwrap().unwrap().path();
    let enh = amrconvnet(
        root,
        &["enhance", "--checkpoint", checkpoint.to_str().unwrap(), "--out", "enh", "--dump-spectrogram",
          coded.to_str().unwrap(), truth.to_str().unwrap()],
    );
    assert_eq!(enh.status.code(), Some(0), "{}", stderr(&enh));
    assert!(stderr(&enh).contains("skipping"));
    let stem = coded.file_stem().unwrap().to_str().unwrap();
    let out = amrconvnet::audio_io::read_wav(root.join("enh").join(format!("{stem}.wav"))).unwrap();
    assert_eq!(out.sample_rate, 16000);
    assert!(root.join("enh").join(format!("{stem}.enhanced.csv")).exists());

    let only_bad = amrconvnet(root, &["enhance", "--checkpoint", checkpoint.to_str().unwrap(), truth.to_str().unwrap()]);
    assert_eq!(only_bad.status.code(), Some(2));

    let eval = amrconvnet(
        root,
        &["evaluate", "--checkpoint", checkpoint.to_str().unwrap(), "--manifest", "data/manifest.tsv",
          "--metric", "snr,lsd", "--out", "eval"],
    );
    assert_eq!(eval.status.code(), Some(0), "{}", stderr(&eval));
    let stdout = String::from_utf8_lossy(&eval.stdout);
    assert!(stdout.contains("lsd_db") && stdout.contains("all"), "{stdout}");
    for f in ["report.csv", "curve.csv", "utterances.json"] {
        assert!(root.join("eval").join(f).exists(), "{f}");
    }
}

#[test]
fn evaluate_without_test_utterances_is_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    // One utterance per speaker: everything lands in the training split.
    common::prepared_corpus(root, 2, 1, 0.3, &[Bitrate::Kbps4_75]);
    common::toy_config(root, "");
    let train = amrconvnet(root, &["train", "--config", "toy.toml", "--out", "run", "--epochs", "1"]);
    // Without validation utterances training itself cannot run.
    assert_eq!(train.status.code(), Some(2), "{}", stderr(&train));

    let model = amrconvnet::model::Model::build(amrconvnet::model::ModelConfig::toy()).unwrap();
    let ckpt = root.join("init.ckpt");
    amrconvnet::optim_train::Checkpoint::initial(model, Default::default()).save(&ckpt).unwrap();
    let eval = amrconvnet(
        root,
        &["evaluate", "--checkpoint", "init.ckpt", "--manifest", "data/manifest.tsv", "--metric", "snr"],
    );
    assert_eq!(eval.status.code(), Some(2));
    assert!(stderr(&eval).contains("no test utterances"), "{}", stderr(&eval));
}
