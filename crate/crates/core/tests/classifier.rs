// Oracles index explicitly to mirror the formulas.
#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s3a::classifier::*;
use s3a::Matrix;

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
fn pairwise_auc(scores: &[f64], labels: &[Label]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, li) in labels.iter().enumerate() {
        for (j, lj) in labels.iter().enumerate() {
            if *li == Label::Positive && *lj == Label::Negative {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn separable(seed: u64, n: usize, d: usize) -> (Matrix, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut cols = Vec::new();
    let mut labels = Vec::new();
    while cols.len() < n {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s: f64 = x.iter().zip(&normal).map(|(a, b)| a * b).sum();
        if s.abs() < 0.5 {
            continue;
        }
        labels.push(if s > 0.0 { Label::Positive } else { Label::Negative });
        cols.push(x);
    }
    (Matrix::from_columns(&cols).unwrap(), labels)
}

#[test]
fn separable_data_has_zero_training_error() {
    for seed in 0..5 {
        let (x, labels) = separable(seed, 60, 3);
        let cfg = SvmConfig {
            cost_pos: 10.0,
            cost_neg: 10.0,
            epochs: 3000,
        };
        let m = train_svm(&x, &labels, &cfg).unwrap();
        for (c, l) in labels.iter().enumerate() {
            assert_eq!(m.predict(&x.column(c)).unwrap(), *l, "seed {seed} sample {c}");
        }
    }
}

#[test]
fn flipping_labels_and_costs_negates_decisions() {
    let (x, labels) = separable(3, 40, 4);
    let cfg = SvmConfig {
        cost_pos: 2.0,
        cost_neg: 0.5,
        epochs: 300,
    };
    let a = train_svm(&x, &labels, &cfg).unwrap();
    let flipped: Vec<Label> = labels.iter().map(|l| l.flipped()).collect();
    let swapped = SvmConfig {
        cost_pos: cfg.cost_neg,
        cost_neg: cfg.cost_pos,
        ..cfg
    };
    let b = train_svm(&x, &flipped, &swapped).unwrap();
    for c in 0..x.cols() {
        let (u, v) = (a.decision_value(&x.column(c)).unwrap(), b.decision_value(&x.column(c)).unwrap());
        assert!((u + v).abs() < 1e-9);
    }
}

#[test]
fn returned_model_is_no_worse_than_zero() {
    let (x, labels) = separable(9, 30, 2);
    let m = train_svm(&x, &labels, &SvmConfig::default()).unwrap();
    let z = Matrix::from_fn(x.rows(), x.cols(), |r, c| (x.get(r, c) - m.feature_means[r]) / m.feature_stds[r]);
    let trained = svm_objective(&m.w, m.b, &z, &labels, 1.0, 1.0).unwrap();
    let zero = svm_objective(&vec![0.0; x.rows()], 0.0, &z, &labels, 1.0, 1.0).unwrap();
    assert!(trained <= zero);
}

proptest! {
    #[test]
    fn roc_area_equals_pairwise_auc(
        data in proptest::collection::vec((0u8..6, any::<bool>()), 2..50)
    ) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 5.0).collect();
        let labels: Vec<Label> = data.iter().map(|(_, p)| if *p { Label::Positive } else { Label::Negative }).collect();
        prop_assume!(labels.contains(&Label::Positive) && labels.contains(&Label::Negative));
        let area = roc_area(&roc_points(&scores, &labels).unwrap());
        prop_assert!((area - pairwise_auc(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn roc_is_monotone_from_origin_to_corner(
        data in proptest::collection::vec((-1e3f64..1e3, any::<bool>()), 2..50)
    ) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| *s).collect();
        let labels: Vec<Label> = data.iter().map(|(_, p)| if *p { Label::Positive } else { Label::Negative }).collect();
        prop_assume!(labels.contains(&Label::Positive) && labels.contains(&Label::Negative));
        let pts = roc_points(&scores, &labels).unwrap();
        prop_assert_eq!(pts[0], (0.0, 0.0));
        prop_assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
        prop_assert!(pts.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
    }

    #[test]
    fn weighted_cost_equals_duplication(
        seed in any::<u64>(),
        n in 2usize..12,
        w in proptest::collection::vec(-2.0f64..2.0, 3),
        b in -1.0f64..1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(3, n, |_, _| rng.random_range(-2.0..2.0));
        let labels: Vec<Label> = (0..n).map(|i| if i % 2 == 0 { Label::Positive } else { Label::Negative }).collect();
        let mut cols: Vec<Vec<f64>> = (0..n).map(|c| x.column(c)).collect();
        let mut dup_labels = labels.clone();
        for c in 0..n {
            if labels[c] == Label::Positive {
                cols.push(x.column(c));
                dup_labels.push(Label::Positive);
            }
        }
        let dup = Matrix::from_columns(&cols).unwrap();
        let weighted = svm_objective(&w, b, &x, &labels, 2.0, 1.0).unwrap();
        let duplicated = svm_objective(&w, b, &dup, &dup_labels, 1.0, 1.0).unwrap();
        prop_assert!((weighted - duplicated).abs() <= 1e-12 * weighted.abs().max(1.0));
    }
}
