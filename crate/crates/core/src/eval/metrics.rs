//! Metric primitives over `(gold, predicted)` index pairs.
//!
//! Everything routes through the confusion matrix; the zero-division
//! convention (0 where a denominator vanishes) is applied uniformly.

/// `confusion[t][p]` = count of pairs with gold `t` and prediction `p`.
pub fn confusion_matrix(pairs: &[(usize, usize)], n_classes: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for &(gold, predicted) in pairs {
        assert!(
            gold < n_classes && predicted < n_classes,
            "pair ({gold}, {predicted}) outside {n_classes} classes"
        );
        m[gold][predicted] += 1;
    }
    m
}

/// Fraction of pairs with `gold == predicted`.
pub fn accuracy(pairs: &[(usize, usize)]) -> f64 {
    assert!(!pairs.is_empty(), "accuracy of an empty dataset");
    let correct = pairs.iter().filter(|(g, p)| g == p).count();
    correct as f64 / pairs.len() as f64
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Per-class `(precision, recall, f1, support)` in class order.
pub fn per_class_metrics(confusion: &[Vec<u64>]) -> Vec<(f64, f64, f64, u64)> {
    let n = confusion.len();
    (0..n)
        .map(|c| {
            let tp = confusion[c][c];
            let support: u64 = confusion[c].iter().sum();
            let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            (precision, recall, f1_from(precision, recall), support)
        })
        .collect()
}

/// F1 over class-pooled TP/FP/FN. For single-label classification every
/// false prediction is simultaneously one FP and one FN, so this equals
/// accuracy — kept in pooled form so the identity is checkable, not assumed.
pub fn micro_f1(pairs: &[(usize, usize)], n_classes: usize) -> f64 {
    assert!(!pairs.is_empty(), "micro_f1 of an empty dataset");
    let confusion = confusion_matrix(pairs, n_classes);
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for c in 0..n_classes {
        let class_tp = confusion[c][c];
        let support: u64 = confusion[c].iter().sum();
        let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
        tp += class_tp;
        fp += predicted - class_tp;
        fn_ += support - class_tp;
    }
    if 2 * tp + fp + fn_ == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Unweighted mean of per-class F1 over ALL `n_classes` manifest classes;
/// classes absent from the data contribute 0.
pub fn macro_f1(pairs: &[(usize, usize)], n_classes: usize) -> f64 {
    assert!(!pairs.is_empty(), "macro_f1 of an empty dataset");
    assert!(n_classes > 0, "macro_f1 needs at least one class");
    let confusion = confusion_matrix(pairs, n_classes);
    let sum: f64 = per_class_metrics(&confusion)
        .iter()
        .map(|&(_, _, f1, _)| f1)
        .sum();
    sum / n_classes as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn micro_f1_equals_accuracy_for_single_label_data() {
        // Identity of this regime, checked over both computation routes.
        let pairs = [(0, 1), (1, 1), (2, 0), (2, 2), (0, 0), (1, 1)];
        assert_eq!(micro_f1(&pairs, 3), accuracy(&pairs));
    }

    #[test]
    fn perfect_and_always_wrong_extremes() {
        let right = [(0, 0), (1, 1)];
        assert_eq!(micro_f1(&right, 2), 1.0);
        assert_eq!(macro_f1(&right, 2), 1.0);
        let wrong = [(0, 1), (1, 0)];
        assert_eq!(micro_f1(&wrong, 2), 0.0);
        assert_eq!(macro_f1(&wrong, 2), 0.0);
        assert_eq!(accuracy(&wrong), 0.0);
    }

    #[test]
    fn zero_division_classes_score_zero_without_panicking() {
        // Class 1 is never gold and never predicted; class 2 is gold once
        // but never predicted (recall 0); class 0 absorbs everything
        // (precision 0.5).
        let pairs = [(0, 0), (2, 0)];
        let per = per_class_metrics(&confusion_matrix(&pairs, 3));
        assert_eq!(per[0], (0.5, 1.0, 2.0 / 3.0, 1));
        assert_eq!(per[1], (0.0, 0.0, 0.0, 0));
        assert_eq!(per[2], (0.0, 0.0, 0.0, 1));
        let macro_ = macro_f1(&pairs, 3);
        assert!((macro_ - (2.0 / 3.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_manifest_class_indices_panic() {
        let result = std::panic::catch_unwind(|| confusion_matrix(&[(0, 3)], 3));
        assert!(result.is_err());
    }
}
