use adgan_core::diffnet::Matrix;
use adgan_core::evalmetrics::{
    baseline_logreg, compute_metrics, repeated_runs, ConfusionMatrix, LogReg, LogRegConfig, MeanStd,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Precision, recall and F1 of one class straight from the prediction list.
fn brute_force(truth: &[usize], pred: &[usize], k: usize) -> (f64, f64, f64) {
    let tp = truth.iter().zip(pred).filter(|(t, p)| **t == k && **p == k).count() as f64;
    let predicted = pred.iter().filter(|p| **p == k).count() as f64;
    let actual = truth.iter().filter(|t| **t == k).count() as f64;
    let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
    let r = if actual > 0.0 { tp / actual } else { 0.0 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

#[test]
fn two_class_toy_matches_hand_computation() {
    // [[3, 1], [2, 4]] in the top-left corner.
    let truth = [0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
    let pred = [0, 0, 0, 1, 0, 0, 1, 1, 1, 1];
    let r = compute_metrics(&ConfusionMatrix::from_predictions(&truth, &pred).unwrap()).unwrap();
    assert!((r.accuracy - 0.7).abs() < 1e-15);
    // class 0: p = 3/5, r = 3/4; class 1: p = 4/5, r = 4/6.
    let f0 = 2.0 * 0.6 * 0.75 / 1.35;
    let f1 = 2.0 * 0.8 * (4.0 / 6.0) / (0.8 + 4.0 / 6.0);
    assert!((r.per_class_f1[0] - f0).abs() < 1e-15);
    assert!((r.per_class_f1[1] - f1).abs() < 1e-15);
    assert_eq!(&r.per_class_f1[2..], &[0.0, 0.0]);
    assert!((r.macro_f1 - (f0 + f1) / 4.0).abs() < 1e-15);
    assert!((r.macro_precision - 1.4 / 4.0).abs() < 1e-15);
}

fn predictions() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..200).prop_flat_map(|n| {
        (
            proptest::collection::vec(0usize..4, n),
            proptest::collection::vec(0usize..4, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metrics_match_brute_force((truth, pred) in predictions()) {
        let r = compute_metrics(&ConfusionMatrix::from_predictions(&truth, &pred).unwrap()).unwrap();
        let mut sums = (0.0, 0.0, 0.0);
        for k in 0..4 {
            let (p, rc, f) = brute_force(&truth, &pred, k);
            prop_assert!((r.per_class_f1[k] - f).abs() < 1e-12);
            sums = (sums.0 + p, sums.1 + rc, sums.2 + f);
        }
        prop_assert!((r.macro_precision - sums.0 / 4.0).abs() < 1e-12);
        prop_assert!((r.macro_recall - sums.1 / 4.0).abs() < 1e-12);
        let correct = truth.iter().zip(&pred).filter(|(t, p)| t == p).count();
        prop_assert_eq!(r.accuracy, correct as f64 / truth.len() as f64);
        prop_assert!(r.values().iter().all(|v| (0.0..=1.0).contains(v)));
        let (lo, hi) = r.per_class_f1.iter().fold((1.0f64, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        prop_assert!(lo <= r.macro_f1 && r.macro_f1 <= hi);
    }

    #[test]
    fn metrics_are_invariant_under_class_relabelling((truth, pred) in predictions(), seed in any::<u64>()) {
        let mut perm = [0usize, 1, 2, 3];
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let pt: Vec<usize> = truth.iter().map(|&t| perm[t]).collect();
        let pp: Vec<usize> = pred.iter().map(|&p| perm[p]).collect();
        let a = compute_metrics(&ConfusionMatrix::from_predictions(&truth, &pred).unwrap()).unwrap();
        let b = compute_metrics(&ConfusionMatrix::from_predictions(&pt, &pp).unwrap()).unwrap();
        for k in 0..4 {
            prop_assert!((a.per_class_f1[k] - b.per_class_f1[perm[k]]).abs() < 1e-15);
        }
        prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        prop_assert!((a.macro_precision - b.macro_precision).abs() < 1e-12);
        prop_assert!((a.macro_recall - b.macro_recall).abs() < 1e-12);
        prop_assert_eq!(a.accuracy, b.accuracy);
    }
}

#[test]
fn identical_runs_have_zero_spread() {
    let m = compute_metrics(&ConfusionMatrix::from_predictions(&[0, 1, 2, 3], &[0, 1, 2, 2]).unwrap()).unwrap();
    let r = repeated_runs(10, |_| Ok(m.clone())).unwrap();
    assert!(r.columns().iter().all(|c| c.std == 0.0));
    assert_eq!(r.accuracy().to_string(), "0.75000(0.000)");
    assert_eq!(
        MeanStd {
            mean: 0.40495,
            std: 0.013
        }
        .to_string(),
        "0.40495(0.013)"
    );
}

fn blobs(n_per_class: usize, classes: usize, spread: f64, rng: &mut impl Rng) -> (Matrix, Vec<usize>) {
    let noise = Normal::new(0.0, spread).unwrap();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for k in 0..classes {
        for _ in 0..n_per_class {
            let angle = k as f64 * std::f64::consts::TAU / classes as f64;
            data.push(angle.cos() + noise.sample(rng));
            data.push(angle.sin() + noise.sample(rng));
            data.extend((0..3).map(|_| noise.sample(rng)));
            labels.push(k);
        }
    }
    (Matrix::new(labels.len(), 5, data).unwrap(), labels)
}

#[test]
fn separable_two_class_data_is_learned() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (x, y) = blobs(100, 2, 0.2, &mut rng);
    let (tx, ty) = blobs(100, 2, 0.2, &mut rng);
    let r = baseline_logreg(&x, &y, &tx, &ty, &LogRegConfig::default()).unwrap();
    assert!(r.accuracy >= 0.95, "accuracy {}", r.accuracy);
    let again = baseline_logreg(&x, &y, &tx, &ty, &LogRegConfig::default()).unwrap();
    assert_eq!(again, r);
    assert_eq!(
        LogReg::fit(&x, &y, &LogRegConfig::default()).unwrap(),
        LogReg::fit(&x, &y, &LogRegConfig::default()).unwrap()
    );
}

#[test]
fn shuffled_labels_give_chance_accuracy() {
    let report = repeated_runs(10, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let (x, mut y) = blobs(100, 4, 0.3, &mut rng);
        y.shuffle(&mut rng);
        let (tx, mut ty) = blobs(100, 4, 0.3, &mut rng);
        ty.shuffle(&mut rng);
        baseline_logreg(&x, &y, &tx, &ty, &LogRegConfig::default())
    })
    .unwrap();
    let acc = report.accuracy().mean;
    assert!((acc - 0.25).abs() <= 0.05, "mean accuracy {acc}");
}
