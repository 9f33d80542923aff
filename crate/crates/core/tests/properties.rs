use proptest::prelude::*;

use amrconvnet::audio_io::{resample, AudioClip};
use amrconvnet::codec_pipeline::{degrade_sim, split_corpus, SimStrength};
use amrconvnet::tensor::{conv1d_forward, Tensor};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_is_a_speaker_disjoint_partition(
        counts in prop::collection::vec(1usize..14, 1..6),
        seed in any::<u64>(),
    ) {
        let ids: Vec<String> = counts
            .iter()
            .enumerate()
            .flat_map(|(s, &n)| (0..n).map(move |u| format!("p{s:03}_{u:03}")))
            .collect();
        let split = split_corpus(&ids, seed);
        prop_assert_eq!(split.len(), ids.len());
        let mut all: Vec<&String> = split.train.iter().chain(&split.validation).chain(&split.test).collect();
        all.sort();
        all.dedup();
        prop_assert_eq!(all.len(), ids.len());
        prop_assert_eq!(split_corpus(&ids, seed), split);
    }

    #[test]
    fn degrade_output_is_bounded(
        samples in prop::collection::vec(-1.0f64..1.0, 2..600),
        bits in 4u32..=8,
    ) {
        let clip = AudioClip::new(samples, 16000);
        let strength = SimStrength { bits, cutoff_hz: 3400.0 };
        let out = degrade_sim(&clip, strength).unwrap();
        prop_assert_eq!(out.sample_rate, 8000);
        prop_assert_eq!(out.len(), clip.len().div_ceil(2));
        let peak = clip.peak();
        prop_assert!(out.samples.iter().all(|s| s.is_finite()));
        prop_assert!(out.peak() <= 1.0 && out.peak() <= 2.0 * peak + strength.step_at(peak));
    }

    #[test]
    fn resample_length_follows_rate_ratio(
        len in 1usize..3000,
        from in prop::sample::select(vec![8000u32, 16000, 48000]),
        to in prop::sample::select(vec![8000u32, 16000, 48000]),
    ) {
        let clip = AudioClip::new(vec![0.1; len], from);
        let out = resample(&clip, to).unwrap();
        let expected = (len as u64 * to as u64).div_ceil(from as u64) as usize;
        prop_assert!(out.len().abs_diff(expected) <= 1, "{} vs {}", out.len(), expected);
    }

    #[test]
    fn conv_output_length_is_ceil(len in 1usize..200, k in 1usize..20, stride in 1usize..4) {
        let x = Tensor::new(vec![1, len], vec![1.0; len]).unwrap();
        let w = Tensor::new(vec![2, 1, k], vec![0.5; 2 * k]).unwrap();
        let b = Tensor::new(vec![2], vec![0.0; 2]).unwrap();
        let y = conv1d_forward(&x, &w, &b, stride).unwrap();
        prop_assert_eq!(y.shape(), &[2, len.div_ceil(stride)][..]);
    }
}
