mod common;

use common::oracles;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relcluster_core::evalmetrics::{ari, b_cubed, v_measure, ContingencyTable, EvaluationReport};

const TOL: f64 = 1e-12;

fn close3(a: (f64, f64, f64), b: (f64, f64, f64)) -> bool {
    (a.0 - b.0).abs() <= TOL && (a.1 - b.1).abs() <= TOL && (a.2 - b.2).abs() <= TOL
}

#[test]
fn partition_counts_are_bell_numbers() {
    let bell = [1, 1, 2, 5, 15, 52, 203, 877];
    for (n, &b) in bell.iter().enumerate() {
        assert_eq!(oracles::partitions(n).len(), b);
    }
}

#[test]
fn exhaustive_agreement_up_to_six_items() {
    for n in 1..=6 {
        let parts = oracles::partitions(n);
        for gold in &parts {
            for pred in &parts {
                let t = ContingencyTable::from_dense(gold, pred);
                assert!(close3(t.b_cubed(), oracles::b_cubed(gold, pred)), "{gold:?} {pred:?}");
                assert!(close3(t.v_measure(), oracles::v_measure(gold, pred)), "{gold:?} {pred:?}");
                assert!((t.ari() - oracles::ari(gold, pred)).abs() <= TOL, "{gold:?} {pred:?}");
            }
        }
    }
}

fn labels(n: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0..k, n)
}

proptest! {
    #[test]
    fn random_partitions_of_fifty(gold in labels(50, 8), pred in labels(50, 12)) {
        prop_assert!(close3(b_cubed(&gold, &pred).unwrap(), oracles::b_cubed(&gold, &pred)));
        prop_assert!(close3(v_measure(&gold, &pred).unwrap(), oracles::v_measure(&gold, &pred)));
        prop_assert!((ari(&gold, &pred).unwrap() - oracles::ari(&gold, &pred)).abs() <= TOL);
    }

    #[test]
    fn scores_ignore_label_names(gold in labels(30, 5), pred in labels(30, 6), shift in 1usize..100) {
        let renamed: Vec<String> = pred.iter().map(|p| format!("c{}", (p * 7 + shift) % 1000)).collect();
        let a = EvaluationReport::from_labels(&gold, &pred).unwrap();
        let b = EvaluationReport::from_labels(&gold, &renamed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn scores_ignore_instance_order(gold in labels(40, 5), pred in labels(40, 6), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..40).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let g2: Vec<usize> = order.iter().map(|&i| gold[i]).collect();
        let p2: Vec<usize> = order.iter().map(|&i| pred[i]).collect();
        let a = EvaluationReport::from_labels(&gold, &pred).unwrap();
        let b = EvaluationReport::from_labels(&g2, &p2).unwrap();
        prop_assert!((a.b3_f1 - b.b3_f1).abs() <= TOL);
        prop_assert!((a.v_f1 - b.v_f1).abs() <= TOL);
        prop_assert!((a.ari - b.ari).abs() <= TOL);
    }

    #[test]
    fn scores_are_bounded(gold in labels(25, 4), pred in labels(25, 7)) {
        let r = EvaluationReport::from_labels(&gold, &pred).unwrap();
        for v in [r.b3_precision, r.b3_recall, r.b3_f1, r.v_homogeneity, r.v_completeness, r.v_f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(r.ari <= 1.0);
    }
}

#[test]
fn constant_predictor_on_balanced_classes() {
    let gold: Vec<usize> = (0..80).flat_map(|c| std::iter::repeat_n(c, 700)).collect();
    let pred = vec![0usize; gold.len()];
    let r = EvaluationReport::from_labels(&gold, &pred).unwrap();
    assert!((r.b3_precision - 1.0 / 80.0).abs() < 1e-12);
    assert_eq!(r.b3_recall, 1.0);
    assert!((r.b3_f1 - 2.0 / 81.0).abs() < 1e-12);
    assert_eq!((r.v_homogeneity, r.v_f1, r.ari), (0.0, 0.0, 0.0));
    assert_eq!(r.v_completeness, 1.0);
}

#[test]
fn random_labelings_have_ari_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trials = 400;
    let mean: f64 = (0..trials)
        .map(|_| {
            let gold: Vec<usize> = (0..200).map(|_| rng.random_range(0..5)).collect();
            let pred: Vec<usize> = (0..200).map(|_| rng.random_range(0..5)).collect();
            ari(&gold, &pred).unwrap()
        })
        .sum::<f64>()
        / trials as f64;
    assert!(mean.abs() < 0.02, "mean ARI {mean}");
}
