//! Corpus-to-pairs preparation.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! truth/<id>.wav            16 kHz ground truth
//! coded/<bitrate>/<id>.wav  8 kHz coded input
//! manifest.tsv
//! skipped.log               one `<path>\t<reason>` line per failed input
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    degrade_sim, encode_decode_amr, split_corpus, Bitrate, CodecError, CodecTool, Manifest, ManifestRow, SimStrength,
};
use crate::audio_io::{self, WIDEBAND_RATE};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const SKIP_LOG_FILE: &str = "skipped.log";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodingMode {
    /// Hermetic simulator. `None` picks a strength per bitrate.
    Simulated(Option<SimStrength>),
    External(CodecTool),
}

#[derive(Debug, Clone)]
pub struct PrepareConfig {
    pub corpus_dir: PathBuf,
    pub out_dir: PathBuf,
    pub bitrates: Vec<Bitrate>,
    pub mode: CodingMode,
    pub seed: u64,
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
}

#[derive(Debug)]
pub struct PrepareOutcome {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub skipped: Vec<(PathBuf, String)>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CodecError + '_ {
    move |source| CodecError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn collect_wavs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CodecError> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            collect_wavs(&path, out)?;
        } else if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        {
            out.push(path);
        }
    }
    Ok(())
}

fn process_one(
    path: &Path,
    id: &str,
    config: &PrepareConfig,
) -> Result<Vec<(Bitrate, PathBuf, PathBuf)>, CodecError> {
    let source = audio_io::read_wav(path)?;
    let mut truth = if source.sample_rate == WIDEBAND_RATE {
        source
    } else {
        audio_io::resample(&source, WIDEBAND_RATE)?
    };
    // Even length so the coded clip is exactly half as long.
    let even = truth.len() & !1;
    truth.fit_to_len(even);
    if truth.is_empty() {
        return Err(CodecError::Audio(audio_io::AudioError::Malformed {
            path: path.to_path_buf(),
            detail: "no samples".into(),
        }));
    }
    let truth_rel = PathBuf::from("truth").join(format!("{id}.wav"));
    let mut coded = Vec::with_capacity(config.bitrates.len());
    for &bitrate in &config.bitrates {
        let clip = match &config.mode {
            CodingMode::Simulated(strength) => {
                degrade_sim(&truth, strength.unwrap_or_else(|| SimStrength::for_bitrate(bitrate)))?
            }
            CodingMode::External(tool) => encode_decode_amr(&truth, bitrate, tool)?,
        };
        let rel = PathBuf::from("coded").join(bitrate.label()).join(format!("{id}.wav"));
        coded.push((bitrate, rel, clip));
    }
    audio_io::write_wav(&truth, config.out_dir.join(&truth_rel))?;
    let mut rows = Vec::with_capacity(coded.len());
    for (bitrate, rel, clip) in coded {
        audio_io::write_wav(&clip, config.out_dir.join(&rel))?;
        rows.push((bitrate, truth_rel.clone(), rel));
    }
    Ok(rows)
}

/// Builds the pair corpus, split and manifest. Files that fail are logged
/// and skipped; an empty result is an error.
pub fn prepare_pairs(config: &PrepareConfig) -> Result<PrepareOutcome, CodecError> {
    if !config.corpus_dir.is_dir() {
        return Err(CodecError::MissingCorpus(config.corpus_dir.clone()));
    }
    let mut files = Vec::new();
    collect_wavs(&config.corpus_dir, &mut files)?;
    files.sort();

    let mut skipped = Vec::new();
    let mut by_id: BTreeMap<String, PathBuf> = BTreeMap::new();
    for path in files {
        let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        if let Some(first) = by_id.get(&id) {
            skipped.push((path, format!("duplicate id {id} (first seen at {})", first.display())));
        } else {
            by_id.insert(id, path);
        }
    }

    fs::create_dir_all(config.out_dir.join("truth")).map_err(io_err(&config.out_dir))?;
    for b in &config.bitrates {
        let dir = config.out_dir.join("coded").join(b.label());
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }

    let work: Vec<(&String, &PathBuf)> = by_id.iter().collect();
    let run = || {
        work.par_iter()
            .map(|(id, path)| (id.as_str(), path.as_path(), process_one(path, id, config)))
            .collect::<Vec<_>>()
    };
    let results = match config.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map(|pool| pool.install(run))
            .unwrap_or_else(|_| run()),
        None => run(),
    };

    let mut done = Vec::new();
    for (id, path, result) in results {
        match result {
            Ok(rows) => done.push((id.to_string(), rows)),
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                skipped.push((path.to_path_buf(), e.to_string()));
            }
        }
    }
    skipped.sort();

    let mut log = String::new();
    for (path, reason) in &skipped {
        log.push_str(&format!("{}\t{}\n", path.display(), reason.replace(['\n', '\t'], " ")));
    }
    let log_path = config.out_dir.join(SKIP_LOG_FILE);
    fs::write(&log_path, log).map_err(io_err(&log_path))?;

    if done.is_empty() {
        return Err(CodecError::EmptyManifest);
    }
    let ids: Vec<String> = done.iter().map(|(id, _)| id.clone()).collect();
    let split = split_corpus(&ids, config.seed);
    let mut rows = Vec::new();
    for (id, pairs) in done {
        let s = split.split_of(&id).expect("split covers every id");
        for (bitrate, truth, coded) in pairs {
            rows.push(ManifestRow {
                id: id.clone(),
                split: s,
                truth,
                coded,
                bitrate,
            });
        }
    }
    let manifest = Manifest::new(&config.out_dir, rows);
    let manifest_path = config.out_dir.join(MANIFEST_FILE);
    manifest.write(&manifest_path)?;
    info!(
        "{} pairs ({} train / {} val / {} test utterances), {} skipped",
        manifest.len(),
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        skipped.len()
    );
    Ok(PrepareOutcome {
        manifest,
        manifest_path,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec_pipeline::Split;

    fn config(corpus: &Path, out: &Path) -> PrepareConfig {
        PrepareConfig {
            corpus_dir: corpus.to_path_buf(),
            out_dir: out.to_path_buf(),
            bitrates: vec![Bitrate::Kbps4_75],
            mode: CodingMode::Simulated(None),
            seed: 0,
            jobs: Some(2),
        }
    }

    #[test]
    fn toy_corpus_three_pairs() {
        let corpus = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        crate::synth::write_corpus(corpus.path(), 1, 3, 0.25, 48000).unwrap();
        let o = prepare_pairs(&config(corpus.path(), out.path())).unwrap();
        assert_eq!(o.manifest.len(), 3);
        assert!(o.skipped.is_empty());
        let row = &o.manifest.rows[0];
        let truth = audio_io::read_wav(o.manifest.resolve(&row.truth)).unwrap();
        let coded = audio_io::read_wav(o.manifest.resolve(&row.coded)).unwrap();
        assert_eq!(truth.sample_rate, 16000);
        assert_eq!(coded.sample_rate, 8000);
        assert_eq!(coded.len() * 2, truth.len());
        assert_eq!(o.manifest.rows_in(Split::Train).count(), 1);
    }

    #[test]
    fn corrupt_file_is_skipped_and_rerun_identical() {
        let corpus = tempfile::tempdir().unwrap();
        crate::synth::write_corpus(corpus.path(), 2, 4, 0.2, 16000).unwrap();
        fs::write(corpus.path().join("p001").join("p001_bad.wav"), b"RIFF....junk").unwrap();
        let out = tempfile::tempdir().unwrap();
        let mut cfg = config(corpus.path(), out.path());
        cfg.bitrates = vec![Bitrate::Kbps4_75, Bitrate::Kbps12_20];
        let a = prepare_pairs(&cfg).unwrap();
        assert_eq!(a.manifest.len(), 16);
        assert_eq!(a.skipped.len(), 1);
        let log = fs::read_to_string(out.path().join(SKIP_LOG_FILE)).unwrap();
        assert!(log.contains("p001_bad.wav"));
        let first = fs::read(&a.manifest_path).unwrap();
        cfg.jobs = Some(1);
        let b = prepare_pairs(&cfg).unwrap();
        assert_eq!(fs::read(&b.manifest_path).unwrap(), first);
    }

    #[test]
    fn all_corrupt_is_error() {
        let corpus = tempfile::tempdir().unwrap();
        fs::write(corpus.path().join("x.wav"), b"not a wav").unwrap();
        let out = tempfile::tempdir().unwrap();
        assert!(matches!(
            prepare_pairs(&config(corpus.path(), out.path())),
            Err(CodecError::EmptyManifest)
        ));
    }
}
