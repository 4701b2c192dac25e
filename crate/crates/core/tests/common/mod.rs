//! Brute-force reference implementations the optimised code is checked
//! against. Deliberately naive: nested loops, no sorting tricks.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Squared Euclidean distance in f64.
pub fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum()
}

/// Distance from `query` to its nearest row of `bank` (row-major, `dim` wide).
pub fn brute_nn_distance(bank: &[f32], dim: usize, query: &[f32]) -> f64 {
    let mut best = f64::INFINITY;
    for row in bank.chunks(dim) {
        let d = sq_dist(row, query);
        if d < best {
            best = d;
        }
    }
    best.sqrt()
}

/// Index of the nearest centroid among `k` rows of `centroids`; ties go to
/// the lowest index.
pub fn brute_nearest_centroid(centroids: &[f32], sub_dim: usize, v: &[f32]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, row) in centroids.chunks(sub_dim).enumerate() {
        let d = sq_dist(row, v);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half, by enumerating every pair.
pub fn pairwise_auc(labels: &[bool], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Best F1 over every distinct value used as threshold (`value >= t`).
pub fn exhaustive_f1(values: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds = values.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let positives = labels.iter().filter(|&&l| l).count();
    let mut best = 0.0f64;
    for t in thresholds {
        let (mut tp, mut fp) = (0usize, 0usize);
        for (v, &l) in values.iter().zip(labels) {
            if *v >= t {
                if l {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let fneg = positives - tp;
        let f1 = 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64;
        best = best.max(f1);
    }
    best
}

pub fn random_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
        .collect()
}
