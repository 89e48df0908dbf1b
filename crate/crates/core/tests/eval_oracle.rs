//! Metric implementations vs. the brute-force confusion-count oracle.
//!
//! The library composes F1 from precision and recall; the oracle computes
//! `2·TP / (2·TP + FP + FN)` straight from the counts. The two routes are
//! algebraically equal, so any drift is a bug in one of them.

mod support;

use lexforge_core::eval::{accuracy, macro_f1, micro_f1, EvalReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use support::naive_f1;

#[test]
fn metrics_match_the_oracle_on_a_thousand_random_datasets() {
    let mut rng = ChaCha20Rng::seed_from_u64(0x5EED_F00D);
    for case in 0..1000 {
        let n_classes = rng.gen_range(1..=4usize);
        let n = rng.gen_range(1..=20usize);
        let gold: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n_classes)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n_classes)).collect();
        let pairs: Vec<(usize, usize)> =
            gold.iter().copied().zip(pred.iter().copied()).collect();

        let (oracle_micro, oracle_macro) = naive_f1(&gold, &pred, n_classes);
        let micro = micro_f1(&pairs, n_classes);
        let macro_ = macro_f1(&pairs, n_classes);
        assert!(
            (micro - oracle_micro).abs() < 1e-12,
            "case {case}: micro {micro} vs oracle {oracle_micro} (gold {gold:?}, pred {pred:?})"
        );
        assert!(
            (macro_ - oracle_macro).abs() < 1e-12,
            "case {case}: macro {macro_} vs oracle {oracle_macro} (gold {gold:?}, pred {pred:?})"
        );
        assert!((0.0..=1.0).contains(&micro));
        assert!((0.0..=1.0).contains(&macro_));

        // Accuracy has its own closed form: exact-match fraction.
        let correct = gold.iter().zip(&pred).filter(|(g, p)| g == p).count();
        assert_eq!(accuracy(&pairs), correct as f64 / n as f64);

        // And for single-label data, pooled-counts micro-F1 IS accuracy.
        assert!((micro - accuracy(&pairs)).abs() < 1e-15);
    }
}

#[test]
fn assembled_reports_agree_with_the_oracle_too() {
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let labels: Vec<String> = ["w", "x", "y", "z"].iter().map(|s| s.to_string()).collect();
    for _ in 0..100 {
        let n = rng.gen_range(1..=20usize);
        let pairs: Vec<(usize, usize)> = (0..n)
            .map(|_| (rng.gen_range(0..4), rng.gen_range(0..4)))
            .collect();
        let gold: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let report = EvalReport::from_pairs(&pairs, &labels).unwrap();
        let (oracle_micro, oracle_macro) = naive_f1(&gold, &pred, 4);
        assert!((report.micro_f1 - oracle_micro).abs() < 1e-12);
        assert!((report.macro_f1 - oracle_macro).abs() < 1e-12);
        let total: u64 = report.confusion.iter().flatten().sum();
        assert_eq!(total as usize, n);
    }
}

#[test]
fn the_worked_three_class_dataset_is_exact() {
    // A: 2 correct + 1 → B; B: 1 correct + 1 → A; C: 1 correct.
    let gold = [0, 0, 0, 1, 1, 2];
    let pred = [0, 0, 1, 1, 0, 2];
    let pairs: Vec<(usize, usize)> = gold.iter().copied().zip(pred.iter().copied()).collect();
    let (oracle_micro, oracle_macro) = naive_f1(&gold, &pred, 3);
    assert_eq!(oracle_micro, 4.0 / 6.0);
    assert_eq!(oracle_macro, 13.0 / 18.0);
    assert_eq!(micro_f1(&pairs, 3), 4.0 / 6.0);
    assert!((macro_f1(&pairs, 3) - 13.0 / 18.0).abs() < 1e-15);
    assert!((macro_f1(&pairs, 3) - 0.722).abs() < 0.001);
}
