mod common;

use common::{brute_bag_gram, brute_scatter, min_eigenvalue, KINDS};
use kselect::feature_select::compute_bin_scatter;
use kselect::kernels::{self, KernelKind};
use kselect::Histogram;
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = KernelKind> {
    prop::sample::select(KINDS.to_vec())
}

/// `n × d` non-negative histograms, with some exact zeros mixed in.
fn dataset(max_n: usize, max_d: usize) -> impl Strategy<Value = Vec<Histogram>> {
    (1..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        prop::collection::vec(
            prop::collection::vec(prop_oneof![4 => 0.0..10.0f64, 1 => Just(0.0)], d),
            n,
        )
        .prop_map(|rows| rows.into_iter().map(|r| Histogram::new(r).unwrap()).collect())
    })
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kappa_is_symmetric(kind in kind(), a in 0.0..10.0f64, b in 0.0..10.0f64) {
        prop_assert_eq!(kernels::kappa(kind, a, b).unwrap(), kernels::kappa(kind, b, a).unwrap());
    }

    #[test]
    fn grams_are_positive_semidefinite(
        kind in kind(),
        xs in dataset(20, 4),
        p in prop::collection::vec(0.0..3.0f64, 4),
    ) {
        let per_bin = kernels::per_bin_grams(kind, &xs).unwrap();
        for g in &per_bin {
            prop_assert!(min_eigenvalue(g) >= -1e-8);
        }
        let combined = kernels::weighted_sum(&per_bin, &p[..per_bin.len()]);
        prop_assert!(min_eigenvalue(&combined) >= -1e-8);
    }

    #[test]
    fn combined_kernel_is_sum_of_bins(kind in kind(), xs in dataset(6, 5)) {
        let per_bin = kernels::per_bin_grams(kind, &xs).unwrap();
        let ones = vec![1.0; xs[0].dim()];
        for i in 0..xs.len() {
            for j in 0..xs.len() {
                let direct = kernels::combined_kernel(kind, &ones, &xs[i], &xs[j]).unwrap();
                let summed: f64 = per_bin.iter().map(|g| g[[i, j]]).sum();
                prop_assert!(rel_close(direct, summed, 1e-12));
            }
        }
        let full = kernels::gram(kind, &xs).unwrap();
        let weighted = kernels::weighted_sum(&per_bin, &ones);
        for (a, b) in full.iter().zip(weighted.iter()) {
            prop_assert!(rel_close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn bag_gram_matches_double_sum(
        kind in kind(),
        flat in dataset(12, 3),
        split in prop::collection::vec(1..=3usize, 1..6),
        seed in any::<u64>(),
    ) {
        // Carve `flat` into bags of the requested sizes, reusing rows cyclically.
        let mut bags = Vec::new();
        let mut at = 0;
        for m in split {
            bags.push((0..m).map(|k| flat[(at + k) % flat.len()].clone()).collect::<Vec<_>>());
            at += m;
        }
        let mut state = seed | 1;
        let s: Vec<Vec<f64>> = bags
            .iter()
            .map(|b| {
                let w: Vec<f64> = (0..b.len())
                    .map(|_| {
                        state ^= state << 13;
                        state ^= state >> 7;
                        state ^= state << 17;
                        (state % 1000) as f64 + 1.0
                    })
                    .collect();
                let total: f64 = w.iter().sum();
                w.into_iter().map(|v| v / total).collect()
            })
            .collect();
        let block = kernels::block_gram(kind, &bags).unwrap();
        let fast = kernels::bag_gram(&block, &s).unwrap();
        let slow = brute_bag_gram(kind, &bags, &s);
        for (a, b) in fast.iter().zip(slow.iter()) {
            prop_assert!(rel_close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn bin_scatter_matches_pair_sum(kind in kind(), xs in dataset(10, 4), labels in prop::collection::vec(any::<bool>(), 10)) {
        let y: Vec<f64> = labels[..xs.len()].iter().map(|b| if *b { 1.0 } else { -1.0 }).collect();
        let fast = compute_bin_scatter(&xs, &y, kind).unwrap();
        let slow = brute_scatter(&xs, &y, kind);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{} vs {}", a, b);
            prop_assert!(*a >= 0.0);
        }
    }
}
