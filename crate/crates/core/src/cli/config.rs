//! The TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::codec_pipeline::{Bitrate, CodecTool, SimStrength};
use crate::eval_metrics::EvalConfig;
use crate::model::ModelConfig;
use crate::optim_train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Source corpus of WAV files.
    pub corpus: Option<PathBuf>,
    /// Output of `prepare`; holds `manifest.tsv`.
    pub data_dir: PathBuf,
    /// Checkpoints, logs and reports.
    pub run_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            data_dir: PathBuf::from("data"),
            run_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecConfig {
    pub bitrates: Vec<Bitrate>,
    /// Use the built-in degradation simulator instead of the external codec.
    pub simulate: bool,
    /// Simulator strength for every bitrate; unset picks one per bitrate.
    pub sim: Option<SimStrength>,
    pub tool: CodecTool,
    /// Split seed.
    pub split_seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            bitrates: vec![Bitrate::Kbps4_75],
            simulate: false,
            sim: None,
            tool: CodecTool::default(),
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Worker threads for every parallel stage.
    pub jobs: Option<usize>,
    pub paths: PathsConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub codec: CodecConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Parses and validates. Relative paths are taken from the config
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(c) = &mut self.paths.corpus {
            fix(c);
        }
        fix(&mut self.paths.data_dir);
        fix(&mut self.paths.run_dir);
        if let Some(d) = &mut self.train.checkpoint_dir {
            fix(d);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train
            .validate(self.model.length_multiple())
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.eval.stft.validate().map_err(|e| CliError::Config(format!("eval.stft: {e}")))?;
        self.train.loss.stft.validate().map_err(|e| CliError::Config(format!("train.loss.stft: {e}")))?;
        if self.codec.bitrates.is_empty() {
            return Err(CliError::Config("codec.bitrates must not be empty".into()));
        }
        if self.jobs == Some(0) {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.paths.data_dir.join(crate::codec_pipeline::MANIFEST_FILE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_config_parses() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/sample_config.toml");
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.train.adam.lr, 3e-4);
        assert_eq!(cfg.train.max_epochs, 300);
        assert_eq!(cfg.model, ModelConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[train]\nlearning_rat = 1.0\n").unwrap();
        assert!(matches!(RunConfig::load(&p), Err(CliError::Config(_))));
        std::fs::write(&p, "[model]\nlevels = 3\n").unwrap();
        assert!(RunConfig::load(&p).is_err());
        std::fs::write(&p, "[paths]\ndata_dir = \"d\"\n").unwrap();
        assert_eq!(RunConfig::load(&p).unwrap().paths.data_dir, dir.path().join("d"));
    }
}
