//! Deterministic per-speaker train/validation/test partition.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Split;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

impl CorpusSplit {
    pub fn split_of(&self, id: &str) -> Option<Split> {
        let has = |v: &[String]| v.binary_search_by(|x| x.as_str().cmp(id)).is_ok();
        if has(&self.train) {
            Some(Split::Train)
        } else if has(&self.validation) {
            Some(Split::Validation)
        } else if has(&self.test) {
            Some(Split::Test)
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Speaker of an utterance id such as `p225_001`: everything before the first
/// underscore, or the whole id when there is none.
pub fn speaker_of(id: &str) -> &str {
    id.split('_').next().unwrap_or(id)
}

/// Splits each speaker's utterances 80/10/10 after a seeded shuffle.
/// Speakers with fewer than three utterances go entirely to training.
/// Duplicate ids are counted once; the returned lists are sorted.
pub fn split_corpus(ids: &[String], seed: u64) -> CorpusSplit {
    let mut by_speaker: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for id in ids {
        by_speaker.entry(speaker_of(id)).or_default().push(id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (_, mut utts) in by_speaker {
        utts.sort_unstable();
        utts.dedup();
        utts.shuffle(&mut rng);
        let n = utts.len();
        let held = if n >= 3 { ((n as f64 * 0.1).round() as usize).max(1) } else { 0 };
        for (i, id) in utts.into_iter().enumerate() {
            let dest = if i < held {
                &mut validation
            } else if i < 2 * held {
                &mut test
            } else {
                &mut train
            };
            dest.push(id.to_string());
        }
    }
    train.sort();
    validation.sort();
    test.sort();
    CorpusSplit {
        train,
        validation,
        test,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(speakers: usize, per: usize) -> Vec<String> {
        (0..speakers)
            .flat_map(|s| (0..per).map(move |u| format!("p{s:03}_{u:03}")))
            .collect()
    }

    #[test]
    fn ten_utterances_one_speaker() {
        let s = split_corpus(&ids(1, 10), 7);
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let all = ids(3, 20);
        assert_eq!(split_corpus(&all, 1), split_corpus(&all, 1));
        assert_ne!(split_corpus(&all, 1).test, split_corpus(&all, 2).test);
    }

    #[test]
    fn hundred_ids_partition() {
        let all = ids(4, 25);
        let s = split_corpus(&all, 3);
        let mut union: Vec<String> = s.train.iter().chain(&s.validation).chain(&s.test).cloned().collect();
        assert_eq!(union.len(), 100);
        union.sort();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(union, sorted);
        for id in &all {
            assert!(s.split_of(id).is_some());
        }
    }

    #[test]
    fn tiny_speakers_train_only() {
        let s = split_corpus(&ids(2, 2), 0);
        assert_eq!(s.train.len(), 4);
        assert!(s.validation.is_empty() && s.test.is_empty());
    }

    #[test]
    fn speaker_prefix() {
        assert_eq!(speaker_of("p225_001"), "p225");
        assert_eq!(speaker_of("single"), "single");
    }
}
