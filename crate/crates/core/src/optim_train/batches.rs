use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{derive_seed, TrainError};
use crate::audio_io::{self, WIDEBAND_RATE};
use crate::codec_pipeline::{Manifest, Split};

/// An aligned utterance: upsampled coded input and 16 kHz target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub id: String,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl TrainingPair {
    pub fn new(id: impl Into<String>, input: Vec<f64>, target: Vec<f64>) -> Result<Self, TrainError> {
        let id = id.into();
        if input.len() != target.len() || input.is_empty() {
            return Err(TrainError::Data(format!(
                "{id}: input has {} samples, target {}",
                input.len(),
                target.len()
            )));
        }
        Ok(Self { id, input, target })
    }
}

/// Loads every `split` row of `manifest`, upsampling coded audio to 16 kHz and
/// trimming or padding it to the truth length.
pub fn load_pairs(manifest: &Manifest, split: Split) -> Result<Vec<TrainingPair>, TrainError> {
    manifest
        .rows_in(split)
        .map(|row| {
            let truth = audio_io::read_wav(manifest.resolve(&row.truth))?;
            let coded = audio_io::read_wav(manifest.resolve(&row.coded))?;
            let mut input = audio_io::resample(&coded, WIDEBAND_RATE)?;
            input.fit_to_len(truth.len());
            TrainingPair::new(format!("{}@{}", row.id, row.bitrate.label()), input.samples, truth.samples)
        })
        .collect()
}

/// One optimizer step's worth of equal-length patches.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    /// `(pair index, offset)` of each patch.
    pub origins: Vec<(usize, usize)>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// The shuffled patches of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochBatches {
    pub batches: Vec<Batch>,
    /// Hex fingerprint of the patch order.
    pub digest: String,
}

/// Cuts `len / patch` random aligned crops from each pair (one zero-padded
/// crop when the pair is shorter than a patch), shuffles all crops by
/// `(seed, epoch)` and groups them into batches; the last may be smaller.
pub fn make_batches(
    pairs: &[TrainingPair],
    patch_length: usize,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<EpochBatches, TrainError> {
    if pairs.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if patch_length == 0 || batch_size == 0 {
        return Err(TrainError::Config("patch length and batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xba7c, epoch as u64));
    let mut crops = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        let len = pair.input.len();
        if len < patch_length {
            if epoch <= 1 {
                warn!("{}: {len} samples is shorter than the {patch_length}-sample patch; zero-padding", pair.id);
            }
            crops.push((i, 0));
            continue;
        }
        for _ in 0..len / patch_length {
            crops.push((i, rng.gen_range(0..=len - patch_length)));
        }
    }
    crops.shuffle(&mut rng);

    let mut hasher = Sha256::new();
    for &(i, off) in &crops {
        hasher.update((i as u64).to_le_bytes());
        hasher.update((off as u64).to_le_bytes());
    }
    let digest: String = hasher.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect();

    let cut = |x: &[f64], off: usize| {
        let mut v = x[off..(off + patch_length).min(x.len())].to_vec();
        v.resize(patch_length, 0.0);
        v
    };
    let batches = crops
        .chunks(batch_size)
        .map(|chunk| Batch {
            inputs: chunk.iter().map(|&(i, o)| cut(&pairs[i].input, o)).collect(),
            targets: chunk.iter().map(|&(i, o)| cut(&pairs[i].target, o)).collect(),
            origins: chunk.to_vec(),
        })
        .collect();
    Ok(EpochBatches { batches, digest })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(n: usize, seed: u64) -> TrainingPair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        TrainingPair::new(format!("u{seed}"), t.iter().map(|x| 0.5 * x).collect(), t).unwrap()
    }

    #[test]
    fn counts_patches() {
        let b = make_batches(&[pair(16384, 0)], 8192, 1, 0, 1).unwrap();
        assert_eq!(b.batches.len(), 2);
        let b = make_batches(&[pair(16384, 0), pair(9000, 1)], 8192, 2, 0, 1).unwrap();
        assert_eq!(b.batches.iter().map(Batch::len).sum::<usize>(), 3);
    }

    #[test]
    fn deterministic_per_seed_and_epoch() {
        let pairs = [pair(5000, 0), pair(7000, 1), pair(3000, 2)];
        assert_eq!(make_batches(&pairs, 512, 4, 9, 3).unwrap(), make_batches(&pairs, 512, 4, 9, 3).unwrap());
        assert_ne!(
            make_batches(&pairs, 512, 4, 9, 3).unwrap().digest,
            make_batches(&pairs, 512, 4, 9, 4).unwrap().digest
        );
    }

    #[test]
    fn short_pair_is_padded() {
        let b = make_batches(&[pair(100, 0)], 256, 1, 0, 1).unwrap();
        let x = &b.batches[0].inputs[0];
        assert_eq!(x.len(), 256);
        assert!(x[100..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn crops_are_aligned() {
        // A target-side marker impulse must land at the same in-patch position
        // as the input-side one: cross-correlation peaks at lag zero.
        let n = 20000;
        let mut input = vec![0.0; n];
        let mut target = vec![0.0; n];
        for k in (0..n).step_by(997) {
            input[k] = 1.0;
            target[k] = -2.0;
        }
        let p = TrainingPair::new("m", input, target).unwrap();
        let eb = make_batches(&[p], 2048, 3, 5, 1).unwrap();
        for b in &eb.batches {
            for (x, y) in b.inputs.iter().zip(&b.targets) {
                let lag_score = |lag: i64| -> f64 {
                    (0..x.len() as i64)
                        .filter(|&t| (0..x.len() as i64).contains(&(t + lag)))
                        .map(|t| x[t as usize] * -y[(t + lag) as usize])
                        .sum()
                };
                let best = (-50..=50).max_by(|&a, &b| lag_score(a).total_cmp(&lag_score(b))).unwrap();
                assert_eq!(best, 0);
            }
        }
    }
}
