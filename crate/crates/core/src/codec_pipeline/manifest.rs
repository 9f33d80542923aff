//! Tab-separated pair manifest.
//!
//! ```text
//! id	split	truth	coded	bitrate
//! p225_001	train	truth/p225_001.wav	coded/4.75k/p225_001.wav	4.75
//! ```
//!
//! Paths are relative to the manifest's directory.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Bitrate;

const HEADER: &str = "id\tsplit\ttruth\tcoded\tbitrate";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: bad header, expected `{expected}`")]
    Header { path: PathBuf, expected: &'static str },
    #[error("{path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub id: String,
    pub split: Split,
    pub truth: PathBuf,
    pub coded: PathBuf,
    pub bitrate: Bitrate,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    /// Directory that relative row paths are resolved against.
    pub root: PathBuf,
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, mut rows: Vec<ManifestRow>) -> Self {
        rows.sort_by(|a, b| (&a.id, a.bitrate).cmp(&(&b.id, b.bitrate)));
        Self {
            root: root.into(),
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.root.join(path)
    }

    pub fn rows_in(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    /// Distinct bitrates present, ascending.
    pub fn bitrates(&self) -> Vec<Bitrate> {
        let mut v: Vec<Bitrate> = self.rows.iter().map(|r| r.bitrate).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Keeps only rows at `bitrate`.
    pub fn at_bitrate(&self, bitrate: Bitrate) -> Manifest {
        Manifest {
            root: self.root.clone(),
            rows: self.rows.iter().filter(|r| r.bitrate == bitrate).cloned().collect(),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.id,
                r.split,
                r.truth.display(),
                r.coded.display(),
                r.bitrate
            ));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ManifestError> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| ManifestError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    /// Reads a manifest; its directory becomes [`Manifest::root`].
    pub fn read(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ManifestError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut lines = text.lines();
        if lines.next().map(str::trim_end) != Some(HEADER) {
            return Err(ManifestError::Header {
                path: path.to_path_buf(),
                expected: HEADER,
            });
        }
        let parse_err = |line: usize, detail: String| ManifestError::Parse {
            path: path.to_path_buf(),
            line,
            detail,
        };
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(parse_err(line_no, format!("expected 5 fields, found {}", f.len())));
            }
            rows.push(ManifestRow {
                id: f[0].to_string(),
                split: f[1].parse().map_err(|e| parse_err(line_no, e))?,
                truth: PathBuf::from(f[2]),
                coded: PathBuf::from(f[3]),
                bitrate: f[4].parse().map_err(|e: super::BitrateParseError| parse_err(line_no, e.to_string()))?,
            });
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Manifest { root, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, split: Split, bitrate: Bitrate) -> ManifestRow {
        ManifestRow {
            id: id.into(),
            split,
            truth: format!("truth/{id}.wav").into(),
            coded: format!("coded/{}/{id}.wav", bitrate.label()).into(),
            bitrate,
        }
    }

    #[test]
    fn round_trip_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest::new(
            dir.path(),
            vec![
                row("p2_001", Split::Test, Bitrate::Kbps4_75),
                row("p1_001", Split::Train, Bitrate::Kbps12_20),
                row("p1_001", Split::Train, Bitrate::Kbps4_75),
            ],
        );
        assert_eq!(m.rows[0].bitrate, Bitrate::Kbps4_75);
        assert_eq!(m.rows[2].id, "p2_001");
        let path = dir.path().join("manifest.tsv");
        m.write(&path).unwrap();
        let back = Manifest::read(&path).unwrap();
        assert_eq!(back, m);
        assert!(fs::read_to_string(&path).unwrap().starts_with("id\tsplit\ttruth\tcoded\tbitrate\n"));
        assert_eq!(back.bitrates(), vec![Bitrate::Kbps4_75, Bitrate::Kbps12_20]);
        assert_eq!(back.rows_in(Split::Train).count(), 2);
    }

    #[test]
    fn parse_errors_carry_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        fs::write(&path, format!("{HEADER}\na\ttrain\tx\ty\t9.60\n")).unwrap();
        match Manifest::read(&path) {
            Err(ManifestError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        fs::write(&path, "nope\n").unwrap();
        assert!(matches!(Manifest::read(&path), Err(ManifestError::Header { .. })));
    }
}
