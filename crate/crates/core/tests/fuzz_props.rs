//! Property tests: parsers are total (typed errors, no panics) on arbitrary
//! bytes, generators are pure, and softened softmax rows behave.

use compresslab::dataio::{load_cifar10, load_idx, split, synth_blobs};
use compresslab::distill::soft_targets;
use compresslab::nn::load_network;
use compresslab::pruning::{build_mask, PruneConfig, PruneStrategy};
use compresslab::Tensor;
use proptest::prelude::*;

fn write_temp(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> std::path::PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, bytes).unwrap();
    path
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn idx_parser_never_panics(images in proptest::collection::vec(any::<u8>(), 0..512),
                               labels in proptest::collection::vec(any::<u8>(), 0..64)) {
        let dir = tempfile::tempdir().unwrap();
        let ip = write_temp(&dir, "i.idx", &images);
        let lp = write_temp(&dir, "l.idx", &labels);
        let _ = load_idx(&ip, &lp);
    }

    #[test]
    fn idx_parser_survives_corrupted_valid_header(mut bytes in proptest::collection::vec(any::<u8>(), 16..256),
                                                  flip in 0usize..16) {
        // graft a valid images magic, then corrupt one header byte
        bytes[..4].copy_from_slice(&0x0000_0803u32.to_be_bytes());
        bytes[flip] ^= 0x5A;
        let dir = tempfile::tempdir().unwrap();
        let ip = write_temp(&dir, "i.idx", &bytes);
        let lp = write_temp(&dir, "l.idx", &bytes);
        let _ = load_idx(&ip, &lp);
    }

    #[test]
    fn cifar_parser_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..8192)) {
        let dir = tempfile::tempdir().unwrap();
        let p = write_temp(&dir, "b.bin", &bytes);
        let _ = load_cifar10(&[&p]);
    }

    #[test]
    fn nncm_loader_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..1024)) {
        let dir = tempfile::tempdir().unwrap();
        let p = write_temp(&dir, "m.nncm", &bytes);
        let _ = load_network(&p);
    }

    #[test]
    fn nncm_loader_survives_magic_plus_garbage(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let mut full = b"NNCM".to_vec();
        full.extend_from_slice(&1u32.to_le_bytes());
        full.extend_from_slice(&bytes);
        let dir = tempfile::tempdir().unwrap();
        let p = write_temp(&dir, "m.nncm", &full);
        let _ = load_network(&p);
    }

    #[test]
    fn soft_targets_rows_sum_to_one(logits in proptest::collection::vec(-30.0f64..30.0, 2..24),
                                    temperature in 0.1f64..50.0) {
        let n = logits.len();
        let t = Tensor::from_vec(&[1, n], logits).unwrap();
        let s = soft_targets(&t, temperature).unwrap();
        let sum: f64 = s.values().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(s.values().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn soft_targets_is_permutation_equivariant(logits in proptest::collection::vec(-10.0f64..10.0, 4..10)) {
        let n = logits.len();
        let t = Tensor::from_vec(&[1, n], logits.clone()).unwrap();
        let s = soft_targets(&t, 2.5).unwrap();
        let mut reversed = logits;
        reversed.reverse();
        let tr = Tensor::from_vec(&[1, n], reversed).unwrap();
        let sr = soft_targets(&tr, 2.5).unwrap();
        // summation order changes under the permutation, so allow rounding noise
        for i in 0..n {
            prop_assert!((s.values()[i] - sr.values()[n - 1 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn split_is_partition(n in 2usize..60, fraction in 0.05f64..0.95, seed in any::<u64>()) {
        let data = synth_blobs(2, n, 3, 5.0, 7).unwrap();
        prop_assume!({
            let take = (data.len() as f64 * fraction).floor() as usize;
            take > 0 && take < data.len()
        });
        let (train, val) = split(&data, fraction, seed).unwrap();
        prop_assert_eq!(train.len() + val.len(), data.len());
        prop_assert_eq!(train.len(), (data.len() as f64 * fraction).floor() as usize);
        // multiset of rows is preserved
        let row_bits = |d: &compresslab::dataio::LabeledDataset| {
            let w = d.example_shape()[0];
            let mut rows: Vec<(Vec<u64>, usize)> = (0..d.len())
                .map(|i| {
                    (
                        d.inputs.values()[i * w..(i + 1) * w]
                            .iter()
                            .map(|v| v.to_bits())
                            .collect(),
                        d.labels[i],
                    )
                })
                .collect();
            rows.sort();
            rows
        };
        let mut combined = row_bits(&train);
        combined.extend(row_bits(&val));
        combined.sort();
        prop_assert_eq!(combined, row_bits(&data));
    }

    #[test]
    fn distill_loss_is_non_negative(sl in proptest::collection::vec(-20.0f64..20.0, 6),
                                    tl in proptest::collection::vec(-20.0f64..20.0, 6),
                                    temperature in 0.2f64..20.0,
                                    alpha in 0.0f64..=1.0,
                                    l0 in 0usize..3, l1 in 0usize..3) {
        let student = Tensor::from_vec(&[2, 3], sl).unwrap();
        let teacher = Tensor::from_vec(&[2, 3], tl).unwrap();
        let cfg = compresslab::distill::DistillConfig {
            temperature,
            alpha,
            train: compresslab::nn::TrainConfig::new(1, 1, 0.1, 0.0, 0, false).unwrap(),
        };
        let loss =
            compresslab::distill::distill_loss(&student, &teacher, &[l0, l1], &cfg).unwrap();
        prop_assert!(loss >= 0.0, "loss {loss}");
    }

    #[test]
    fn mask_cardinality_is_exact(fraction in 0.0f64..=1.0, seed in any::<u64>()) {
        let net = compresslab::nn::init_network(
            &[6],
            &[compresslab::nn::LayerSpec::dense(6, 8), compresslab::nn::LayerSpec::dense(8, 4)],
            seed,
        )
        .unwrap();
        let total = 6 * 8 + 8 * 4;
        // random and class_blind mask floor(f * P) globally
        for strategy in [PruneStrategy::Random, PruneStrategy::ClassBlind] {
            let m = build_mask(
                &net,
                &PruneConfig { strategy, fraction, seed, cascade: false, fine_tune: None },
            )
            .unwrap();
            prop_assert_eq!(m.masked_count(), (fraction * total as f64).floor() as usize);
        }
        // class_uniform masks floor(f * P_l) within each layer
        let m = build_mask(
            &net,
            &PruneConfig {
                strategy: PruneStrategy::ClassUniform,
                fraction,
                seed,
                cascade: false,
                fine_tune: None,
            },
        )
        .unwrap();
        for mask in m.per_layer().iter().flatten() {
            let masked = mask.values().iter().filter(|&&v| v == 0.0).count();
            prop_assert_eq!(masked, (fraction * mask.len() as f64).floor() as usize);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn curve_matches_sort_based_median_oracle(
        fractions in proptest::collection::vec(0.0f64..=1.0, 1..5),
        repeats in 1usize..6,
        values in proptest::collection::vec(0.0f64..=1.0, 30),
    ) {
        use compresslab::report::{curve, CurveField, ExperimentRecord, ReportBundle, Stage};
        let mut records = Vec::new();
        let mut vi = 0;
        for &fraction in &fractions {
            for repeat in 0..repeats {
                records.push(ExperimentRecord {
                    stage: Stage::Pruned,
                    strategy: Some(PruneStrategy::ClassBlind),
                    fraction,
                    repeat: repeat as u32,
                    seed: 0,
                    accuracy: values[vi % values.len()],
                    effective_params: 10,
                    cascaded_extra: 0,
                    total_compression: 0.1,
                    wall_ms: 0,
                });
                vi += 1;
            }
        }
        let bundle = ReportBundle::new("x".into(), records.clone());
        let got = curve(&bundle, PruneStrategy::ClassBlind, CurveField::Accuracy).unwrap();
        // oracle: sort distinct fractions, then take the sorted-middle value
        // (or midpoint pair average) of the accuracies at each fraction
        let mut distinct: Vec<f64> = fractions.clone();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        prop_assert_eq!(got.len(), distinct.len());
        for (i, &f) in distinct.iter().enumerate() {
            let mut vs: Vec<f64> = records
                .iter()
                .filter(|r| r.fraction == f)
                .map(|r| r.accuracy)
                .collect();
            vs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let want = if vs.len() % 2 == 1 {
                vs[vs.len() / 2]
            } else {
                (vs[vs.len() / 2 - 1] + vs[vs.len() / 2]) / 2.0
            };
            prop_assert_eq!(got[i].0.to_bits(), f.to_bits());
            prop_assert_eq!(got[i].1.to_bits(), want.to_bits());
        }
    }
}
