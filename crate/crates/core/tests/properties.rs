//! Property tests for the numeric and augmentation invariants.

use proptest::prelude::*;

use con2da_core::augment::{
    make_pair, strong_transform, weak_transform, AugmentPolicy, Domain, PixelBuf, Sample,
    StrongExtra,
};
use con2da_core::optim::{cosine_decay, LrSchedule};
use con2da_core::tape::Tape;
use con2da_core::tensor::Tensor;

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions_and_preserve_argmax(
        rows in prop::collection::vec(
            prop::collection::vec(-50.0f64..50.0, 4),
            1..5,
        ),
        temperature in 0.01f64..10.0,
    ) {
        let n = rows.len();
        let flat: Vec<f64> = rows.concat();
        // Keep inputs tie-free so the argmax comparison is well-defined.
        for row in &rows {
            for i in 0..row.len() {
                for j in (i + 1)..row.len() {
                    prop_assume!((row[i] - row[j]).abs() > 1e-6);
                }
            }
        }
        let mut tape = Tape::new();
        let logits = tape.constant(&Tensor::new(vec![n, 4], flat).unwrap());
        let probs = tape.softmax_t(logits, temperature).unwrap();
        let values = tape.value(probs);
        for (i, row) in rows.iter().enumerate() {
            let p = &values[i * 4..(i + 1) * 4];
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
            prop_assert_eq!(argmax(p), argmax(row));
        }
    }

    #[test]
    fn l2_normalize_is_unit_and_scale_invariant(
        row in prop::collection::vec(-100.0f64..100.0, 3),
        scale in 0.001f64..1000.0,
    ) {
        let norm: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-6);
        let mut tape = Tape::new();
        let v = tape.constant(&Tensor::row(row.clone()));
        let scaled = tape.constant(&Tensor::row(row.iter().map(|x| x * scale).collect()));
        let z1 = tape.l2_normalize_rows(v).unwrap();
        let z2 = tape.l2_normalize_rows(scaled).unwrap();
        let out_norm: f64 = tape.value(z1).iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((out_norm - 1.0).abs() < 1e-9);
        for (a, b) in tape.value(z1).iter().zip(tape.value(z2)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn cosine_decay_stays_in_range(base in 1e-6f64..1.0, total in 1u64..10_000, t_frac in 0.0f64..1.0) {
        let schedule = LrSchedule { base_lr: base, total_iterations: total };
        let t = (t_frac * total as f64) as u64;
        let lr = cosine_decay(&schedule, t).unwrap();
        prop_assert!((0.0..=base).contains(&lr));
    }
}

fn arbitrary_sample(seed: u64) -> Sample {
    let mut data = Vec::with_capacity(3 * 16 * 16);
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    for _ in 0..3 * 16 * 16 {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        data.push((state >> 40) as f32 / (1u64 << 24) as f32);
    }
    Sample {
        pixels: PixelBuf::new(3, 16, 16, data).unwrap(),
        label: None,
        domain: Domain::Target,
        id: seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn augmentation_pipelines_preserve_range_shape_and_determinism(
        sample_seed in 0u64..1000,
        aug_seed in 0u64..1_000_000,
        flip in 0.0f64..1.0,
        crop_lo in 0.5f32..1.0,
        blur_hi in 0.0f32..1.5,
        magnitude in 0u32..=30,
        extras_bits in 0u8..16,
    ) {
        let sample = arbitrary_sample(sample_seed);
        let mut extras = std::collections::BTreeSet::new();
        for (bit, extra) in [
            StrongExtra::ColorJitter,
            StrongExtra::RandomGrayscale,
            StrongExtra::Cutout,
            StrongExtra::RandAugment,
        ]
        .into_iter()
        .enumerate()
        {
            if extras_bits & (1 << bit) != 0 {
                extras.insert(extra);
            }
        }
        let policy = AugmentPolicy {
            crop_scale_range: (crop_lo, 1.0),
            flip_probability: flip,
            blur_sigma_range: (0.0, blur_hi),
            rand_augment_ops: 1,
            rand_augment_magnitude: magnitude,
            strong_extras: extras,
        };
        policy.validate().unwrap();

        let weak = weak_transform(&sample, &policy, aug_seed);
        let strong = strong_transform(&sample, &policy, aug_seed);
        prop_assert!(weak.same_shape(&sample.pixels));
        prop_assert!(strong.same_shape(&sample.pixels));
        prop_assert!(weak.in_unit_range());
        prop_assert!(strong.in_unit_range());

        // Purity: identical inputs replay identical outputs.
        prop_assert_eq!(&weak, &weak_transform(&sample, &policy, aug_seed));
        prop_assert_eq!(&strong, &strong_transform(&sample, &policy, aug_seed));
        let pair = make_pair(&sample, &policy, aug_seed);
        prop_assert_eq!(&pair, &make_pair(&sample, &policy, aug_seed));
        prop_assert_eq!(pair.origin_id, sample.id);
    }
}
