//! Drives the command-line entry point in-process: prepare, train, evaluate
//! and the loss ablation, on a synthetic corpus with a toy configuration.
//!
//! ```text
//! cargo run --release --example cli_pipeline -- [work_dir]
//! ```

use std::path::PathBuf;

use amrconvnet::audio_io::SOURCE_RATE;
use amrconvnet::synth::write_corpus;

const CONFIG: &str = r#"
[paths]
data_dir = "data"
run_dir = "runs/combined"

[model]
levels = 2
channels = [16, 32]
kernel_sizes = [9, 9]

[train]
max_epochs = 4
batch_size = 4
patch_length = 1024

[train.loss]
lambda = 0.1

[codec]
bitrates = ["4.75", "12.2"]
simulate = true
"#;

fn step(args: &[&str]) -> anyhow::Result<()> {
    println!("$ amrconvnet {}", args.join(" "));
    let code = amrconvnet::cli::run(std::iter::once("amrconvnet").chain(args.iter().copied()));
    anyhow::ensure!(code == 0, "`{}` exited with {code}", args[0]);
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "cli_demo".into()));
    write_corpus(&dir.join("corpus"), 3, 8, 0.5, SOURCE_RATE)?;
    std::fs::write(dir.join("run.toml"), CONFIG)?;
    std::env::set_current_dir(&dir)?;

    step(&["prepare", "corpus", "data", "--config", "run.toml"])?;
    step(&["train", "--config", "run.toml"])?;
    step(&["evaluate", "--checkpoint", "runs/combined/best.ckpt", "--manifest", "data/manifest.tsv", "--metric", "snr,lsd"])?;
    step(&["ablate", "--config", "run.toml", "--out", "runs/ablation", "--epochs", "3"])
}
