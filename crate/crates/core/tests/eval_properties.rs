use std::path::Path;

use kselect::data::{self, InstanceSpec, SyntheticSpec};
use kselect::eval;
use proptest::prelude::*;

/// Scores drawn from a small integer range (so ties occur) and labels with at
/// least one positive.
fn ranked() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1..40usize).prop_flat_map(|n| {
        (
            prop::collection::vec((-10i32..10).prop_map(f64::from), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(s, mut l)| {
                l[0] = true;
                (s, l)
            })
    })
}

/// Distinct scores: a shuffled `0..n`.
fn untied() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2..40usize).prop_flat_map(|n| {
        (
            Just((0..n).map(|i| i as f64).collect::<Vec<_>>()).prop_shuffle(),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(s, mut l)| {
                l[0] = true;
                (s, l)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ap_lies_in_unit_interval((s, l) in ranked()) {
        let ap = eval::average_precision(&s, &l).unwrap();
        prop_assert!((0.0..=1.0).contains(&ap));
    }

    #[test]
    fn ap_invariant_under_increasing_maps((s, l) in ranked(), scale in 0.01..100.0f64, shift in -50.0..50.0f64) {
        let ap = eval::average_precision(&s, &l).unwrap();
        let affine: Vec<f64> = s.iter().map(|v| scale * v + shift).collect();
        let cubed: Vec<f64> = s.iter().map(|v| v * v * v + v).collect();
        prop_assert_eq!(ap, eval::average_precision(&affine, &l).unwrap());
        prop_assert_eq!(ap, eval::average_precision(&cubed, &l).unwrap());
    }

    #[test]
    fn ap_is_one_iff_positives_outrank_negatives((s, l) in untied()) {
        let ap = eval::average_precision(&s, &l).unwrap();
        let min_pos = s.iter().zip(&l).filter(|(_, p)| **p).map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
        let max_neg = s.iter().zip(&l).filter(|(_, p)| !**p).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(ap == 1.0, min_pos > max_neg);
    }

    #[test]
    fn pr_recall_is_monotone((s, l) in ranked()) {
        let pts = eval::pr_curve(&s, &l).unwrap();
        for w in pts.windows(2) {
            prop_assert!(w[1].recall >= w[0].recall);
            prop_assert!(w[1].threshold < w[0].threshold);
        }
        prop_assert_eq!(pts.last().unwrap().recall, 1.0);
        prop_assert!(pts.iter().all(|p| (0.0..=1.0).contains(&p.precision)));
    }
}

fn spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec::planted(6, 5, 8, 3, 1.5, seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generators_are_nonnegative_and_deterministic(seed in any::<u64>(), normalize in any::<bool>()) {
        let mut s = spec(seed);
        s.normalize_l1 = normalize;
        let a = data::generate_planted_features(&s).unwrap();
        prop_assert_eq!(&a, &data::generate_planted_features(&s).unwrap());
        prop_assert_eq!(a.len(), 11);
        prop_assert!(a.x.iter().all(|h| h.iter().all(|v| *v >= 0.0)));
        if normalize {
            for h in &a.x {
                let total: f64 = h.iter().sum();
                prop_assert!(total == 0.0 || (total - 1.0).abs() <= 1e-12);
            }
        }

        let inst = InstanceSpec { base: s, m_per_bag: 3, signal_per_pos: 1 };
        let g = data::generate_planted_instances(&inst).unwrap();
        prop_assert_eq!(&g, &data::generate_planted_instances(&inst).unwrap());
        for (bag, truth) in g.bags.iter().zip(&g.truth) {
            let signals = truth.iter().filter(|t| **t).count();
            prop_assert_eq!(signals, if bag.is_positive() { 1 } else { 0 });
            prop_assert!(bag.instances.iter().all(|h| h.iter().all(|v| *v >= 0.0)));
        }
    }
}

#[test]
fn sample_and_bag_files_reload_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let samples = data::generate_planted_features(&spec(3)).unwrap();
    let path = dir.path().join("train.csv");
    data::write_samples(&path, &samples).unwrap();
    assert_eq!(data::load_samples(&path).unwrap(), samples);

    let g = data::generate_planted_instances(&InstanceSpec {
        base: spec(3),
        m_per_bag: 4,
        signal_per_pos: 2,
    })
    .unwrap();
    let path = dir.path().join("bags.jsonl");
    data::write_bags(&path, &g.bags, Some(&g.truth)).unwrap();
    let file = data::load_bag_file(&path).unwrap();
    assert_eq!(file.bags, g.bags);
    assert_eq!(file.truth.as_deref(), Some(&g.truth[..]));
}

#[test]
fn malformed_rows_report_line_numbers() {
    let origin = Path::new("inline.csv");
    let err = data::parse_samples("1,0.5,0.5\n\n-1,0.5\n", origin).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("inline.csv") && msg.contains('3'), "{msg}");
    let err = data::parse_samples("1,0.5\n1,-0.5\n", origin).unwrap_err();
    assert!(err.to_string().contains('2'), "{err}");
    let err = data::parse_bags("{\"bag_id\":1,\"label\":1,\"instances\":[]}\n", Path::new("b.jsonl")).unwrap_err();
    assert!(err.to_string().contains("no instances"), "{err}");
}
