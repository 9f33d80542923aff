use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pesq::pesq_mos_lqo;
use super::{lsd_db, snr_db, MetricError, MetricKind, MetricScore, PesqTool};
use crate::audio_io::{self, AudioClip, WIDEBAND_RATE};
use crate::codec_pipeline::{speaker_of, Bitrate, Manifest, ManifestRow, Split};
use crate::dsp::StftParams;
use crate::model::Model;

/// Speaker label of the pooled rows.
pub const ALL_SPEAKERS: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub metrics: Vec<MetricKind>,
    pub stft: StftParams,
    pub pesq: PesqTool,
    /// Concurrent utterances (and so PESQ processes); `None` uses rayon's default.
    pub jobs: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metrics: vec![MetricKind::Snr, MetricKind::Lsd, MetricKind::Pesq],
            stft: StftParams::default(),
            pesq: PesqTool::default(),
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub id: String,
    pub speaker: String,
    pub bitrate: Bitrate,
    /// Upsampled coded input against truth.
    pub input: MetricScore,
    /// Network output against truth.
    pub enhanced: MetricScore,
}

/// One line of the report. `improvement` is always `enhanced_mean -
/// input_mean`; for LSD a negative improvement is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub speaker: String,
    pub bitrate: Bitrate,
    pub n_utterances: usize,
    pub metric: MetricKind,
    pub input_mean: f64,
    pub enhanced_mean: f64,
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    /// Per speaker, then pooled under [`ALL_SPEAKERS`]; bitrates ascending.
    pub rows: Vec<ReportRow>,
    pub utterances: Vec<UtteranceScore>,
    /// Metric evaluations that failed and were left out of the means.
    pub failures: usize,
    pub notes: Vec<String>,
}

const COLUMNS: [&str; 7] = [
    "speaker",
    "bitrate",
    "n_utterances",
    "metric",
    "input_mean",
    "enhanced_mean",
    "improvement",
];

impl EvalReport {
    fn table(&self, sep: &str) -> String {
        let mut out = COLUMNS.join(sep);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}{sep}{}{sep}{}{sep}{}{sep}{:.6}{sep}{:.6}{sep}{:.6}",
                r.speaker, r.bitrate, r.n_utterances, r.metric, r.input_mean, r.enhanced_mean, r.improvement
            );
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        self.table("\t")
    }

    pub fn to_csv(&self) -> String {
        self.table(",")
    }

    /// Pooled per-bitrate means: the quality-versus-bitrate curve.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("bitrate,metric,n_utterances,input_mean,enhanced_mean,improvement\n");
        for r in self.rows.iter().filter(|r| r.speaker == ALL_SPEAKERS) {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6}",
                r.bitrate, r.metric, r.n_utterances, r.input_mean, r.enhanced_mean, r.improvement
            );
        }
        out
    }

    pub fn row(&self, speaker: &str, bitrate: Bitrate, metric: MetricKind) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.speaker == speaker && r.bitrate == bitrate && r.metric == metric)
    }

    /// Recomputes rows from `utterances`. Scores are visited in id order so
    /// the means do not depend on input order.
    pub fn from_scores(mut utterances: Vec<UtteranceScore>, metrics: &[MetricKind]) -> Self {
        utterances.sort_by(|a, b| (a.bitrate, &a.id).cmp(&(b.bitrate, &b.id)));
        let mut groups: BTreeMap<(bool, String, Bitrate), Vec<&UtteranceScore>> = BTreeMap::new();
        for u in &utterances {
            groups.entry((false, u.speaker.clone(), u.bitrate)).or_default().push(u);
            groups.entry((true, ALL_SPEAKERS.to_string(), u.bitrate)).or_default().push(u);
        }
        let mut rows = Vec::new();
        for ((_, speaker, bitrate), group) in &groups {
            for &metric in metrics {
                let pairs: Vec<(f64, f64)> = group
                    .iter()
                    .filter_map(|u| Some((u.input.get(metric)?, u.enhanced.get(metric)?)))
                    .collect();
                if pairs.is_empty() {
                    continue;
                }
                let n = pairs.len() as f64;
                let input_mean = pairs.iter().map(|p| p.0).sum::<f64>() / n;
                let enhanced_mean = pairs.iter().map(|p| p.1).sum::<f64>() / n;
                rows.push(ReportRow {
                    speaker: speaker.clone(),
                    bitrate: *bitrate,
                    n_utterances: pairs.len(),
                    metric,
                    input_mean,
                    enhanced_mean,
                    improvement: enhanced_mean - input_mean,
                });
            }
        }
        Self {
            rows,
            utterances,
            failures: 0,
            notes: Vec::new(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), MetricError> {
        let write = |name: &str, body: String| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| MetricError::Io { path, source: e })
        };
        std::fs::create_dir_all(dir).map_err(|e| MetricError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        write("report.csv", self.to_csv())?;
        write("curve.csv", self.curve_csv())?;
        write(
            "utterances.json",
            serde_json::to_string_pretty(&self.utterances).expect("scores serialize"),
        )
    }
}

struct Scored {
    score: UtteranceScore,
    failures: usize,
    pesq_missing: Option<String>,
}

fn score_signal(
    truth: &AudioClip,
    test: &AudioClip,
    config: &EvalConfig,
    pesq_paths: Option<(&Path, &Path)>,
    failures: &mut usize,
    pesq_missing: &mut Option<String>,
    label: &str,
) -> MetricScore {
    let mut s = MetricScore::default();
    for &m in &config.metrics {
        let r = match m {
            MetricKind::Snr => snr_db(&truth.samples, &test.samples),
            MetricKind::Lsd => lsd_db(&truth.samples, &test.samples, &config.stft),
            MetricKind::Pesq => match pesq_paths {
                Some((r, d)) => pesq_mos_lqo(r, d, &config.pesq),
                None => continue,
            },
        };
        match r {
            Ok(v) => s.set(m, v),
            Err(MetricError::ToolMissing(p)) => *pesq_missing = Some(p),
            Err(e) => {
                warn!("{label}: {m}: {e}");
                *failures += 1;
            }
        }
    }
    s
}

fn score_row(model: &Model, manifest: &Manifest, row: &ManifestRow, config: &EvalConfig, pesq: bool) -> Result<Scored, MetricError> {
    let truth = audio_io::read_wav(manifest.resolve(&row.truth))?;
    let coded = audio_io::read_wav(manifest.resolve(&row.coded))?;
    let mut input = audio_io::resample(&coded, WIDEBAND_RATE)?;
    input.fit_to_len(truth.len());
    let enhanced = model.enhance_upsampled(&input)?;

    let dir = if pesq {
        Some(tempfile::tempdir().map_err(|e| MetricError::Io {
            path: std::env::temp_dir(),
            source: e,
        })?)
    } else {
        None
    };
    let paths = match &dir {
        Some(d) => {
            let p = [d.path().join("ref.wav"), d.path().join("in.wav"), d.path().join("enh.wav")];
            audio_io::write_wav(&truth, &p[0])?;
            audio_io::write_wav(&input, &p[1])?;
            audio_io::write_wav(&enhanced, &p[2])?;
            Some(p)
        }
        None => None,
    };
    let (mut failures, mut missing) = (0, None);
    let label = format!("{}@{}", row.id, row.bitrate.label());
    let in_score = score_signal(
        &truth,
        &input,
        config,
        paths.as_ref().map(|p| (p[0].as_path(), p[1].as_path())),
        &mut failures,
        &mut missing,
        &label,
    );
    let enh_score = score_signal(
        &truth,
        &enhanced,
        config,
        paths.as_ref().map(|p| (p[0].as_path(), p[2].as_path())),
        &mut failures,
        &mut missing,
        &label,
    );
    Ok(Scored {
        score: UtteranceScore {
            id: row.id.clone(),
            speaker: speaker_of(&row.id).to_string(),
            bitrate: row.bitrate,
            input: in_score,
            enhanced: enh_score,
        },
        failures,
        pesq_missing: missing,
    })
}

/// Scores coded input and enhanced output against truth for every test
/// utterance at the requested bitrates (all present when empty).
pub fn evaluate_corpus(
    model: &Model,
    manifest: &Manifest,
    bitrates: &[Bitrate],
    config: &EvalConfig,
) -> Result<EvalReport, MetricError> {
    let rows: Vec<&ManifestRow> = manifest
        .rows_in(Split::Test)
        .filter(|r| bitrates.is_empty() || bitrates.contains(&r.bitrate))
        .collect();
    if rows.is_empty() {
        return Err(MetricError::NoTestUtterances);
    }
    let pesq = config.metrics.contains(&MetricKind::Pesq);
    let run = || {
        rows.par_iter()
            .map(|r| (r, score_row(model, manifest, r, config, pesq)))
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

    let mut scores = Vec::new();
    let (mut failures, mut missing) = (0, None);
    for (row, r) in results {
        match r {
            Ok(s) => {
                failures += s.failures;
                missing = missing.or(s.pesq_missing);
                scores.push(s.score);
            }
            Err(e) => {
                warn!("{}@{}: {e}", row.id, row.bitrate.label());
                failures += 1;
            }
        }
    }
    let mut report = EvalReport::from_scores(scores, &config.metrics);
    report.failures = failures;
    if let Some(tool) = missing {
        report
            .notes
            .push(format!("PESQ unavailable ({tool} not found); MOS-LQO omitted"));
    }
    if failures > 0 {
        report.notes.push(format!("{failures} metric evaluations failed and were excluded"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(id: &str, b: Bitrate, input: f64, enhanced: f64) -> UtteranceScore {
        UtteranceScore {
            id: id.into(),
            speaker: speaker_of(id).into(),
            bitrate: b,
            input: MetricScore {
                lsd_db: Some(input),
                ..Default::default()
            },
            enhanced: MetricScore {
                lsd_db: Some(enhanced),
                ..Default::default()
            },
        }
    }

    #[test]
    fn rows_are_means_and_differences() {
        let scores = vec![
            u("p1_001", Bitrate::Kbps4_75, 3.0, 2.0),
            u("p1_002", Bitrate::Kbps4_75, 5.0, 3.0),
            u("p2_001", Bitrate::Kbps4_75, 1.0, 1.5),
            u("p2_001", Bitrate::Kbps12_20, 0.5, 0.25),
        ];
        let r = EvalReport::from_scores(scores.clone(), &[MetricKind::Lsd]);
        let p1 = r.row("p1", Bitrate::Kbps4_75, MetricKind::Lsd).unwrap();
        assert_eq!((p1.n_utterances, p1.input_mean, p1.enhanced_mean), (2, 4.0, 2.5));
        assert_eq!(p1.improvement, p1.enhanced_mean - p1.input_mean);
        let all = r.row(ALL_SPEAKERS, Bitrate::Kbps4_75, MetricKind::Lsd).unwrap();
        assert_eq!(all.n_utterances, 3);
        assert_eq!(r.rows.len(), 5);
        assert!(r.rows.iter().all(|row| row.improvement == row.enhanced_mean - row.input_mean));

        let mut rev = scores;
        rev.reverse();
        assert_eq!(EvalReport::from_scores(rev, &[MetricKind::Lsd]).rows, r.rows);
        assert_eq!(r.to_csv().lines().next().unwrap(), COLUMNS.join(","));
        assert_eq!(r.curve_csv().lines().count(), 3);
    }

    #[test]
    fn single_utterance_mean() {
        let r = EvalReport::from_scores(vec![u("p9_001", Bitrate::Kbps7_40, 2.5, 1.0)], &[MetricKind::Lsd]);
        assert_eq!(r.rows[0].input_mean, 2.5);
    }
}
