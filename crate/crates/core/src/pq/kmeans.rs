//! Seeded k-means (k-means++ seeding, Lloyd iterations) on a row-major matrix.

use rand::Rng;

use crate::scalar::{squared_distance, Scalar};

#[derive(Debug, Clone)]
pub(crate) struct KMeansFit<T> {
    /// `k x dim`, row-major.
    pub centroids: Vec<T>,
    /// Total squared error after each assignment step.
    pub error_trace: Vec<f64>,
}

/// Index of the nearest row of `centroids` (`k x dim`); ties go to the lowest
/// index.
#[inline]
pub(crate) fn nearest<T: Scalar>(point: &[T], centroids: &[T], dim: usize) -> (usize, T) {
    let mut best = 0;
    let mut best_dist = T::infinity();
    for (i, c) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_distance(point, c);
        if d < best_dist {
            best = i;
            best_dist = d;
        }
    }
    (best, best_dist)
}

fn kmeans_pp_init<T: Scalar>(data: &[T], dim: usize, k: usize, rng: &mut impl Rng) -> Vec<T> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(row(i), row(first)).as_f64())
        .collect();
    while centroids.len() < k * dim {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // guard against the last positive weight being skipped by rounding
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.extend_from_slice(row(pick));
        for (i, w) in d2.iter_mut().enumerate() {
            let d = squared_distance(row(i), row(pick)).as_f64();
            if d < *w {
                *w = d;
            }
        }
    }
    centroids
}

/// Runs k-means on `data` (`n x dim`) until the assignment stops changing or
/// `max_iters` assignment steps have been taken. An empty cluster is re-seeded
/// with the point farthest from the data mean that is not already a centroid.
pub(crate) fn fit<T: Scalar>(
    data: &[T],
    dim: usize,
    k: usize,
    max_iters: usize,
    rng: &mut impl Rng,
) -> KMeansFit<T> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = kmeans_pp_init(data, dim, k, rng);

    let mut mean = vec![0.0f64; dim];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(row(i)) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mean_t: Vec<T> = mean.iter().map(|&m| T::of(m)).collect();
    let mut by_spread: Vec<usize> = (0..n).collect();
    let spread: Vec<T> = (0..n).map(|i| squared_distance(row(i), &mean_t)).collect();
    by_spread.sort_by(|&a, &b| spread[b].partial_cmp(&spread[a]).unwrap().then(a.cmp(&b)));

    let mut assignment = vec![usize::MAX; n];
    let mut error_trace = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut error = 0.0f64;
        for i in 0..n {
            let (c, d) = nearest(row(i), &centroids, dim);
            error += d.as_f64();
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        error_trace.push(error);
        if !changed {
            break;
        }

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                *s += v.as_f64();
            }
        }
        let mut reseed = by_spread.iter().copied();
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    centroids[c * dim + j] = T::of(sums[c * dim + j] / counts[c] as f64);
                }
                continue;
            }
            // Empty cluster: take the farthest point that is not already a centroid.
            let candidate = reseed.by_ref().find(|&i| {
                centroids
                    .chunks_exact(dim)
                    .all(|cen| squared_distance(cen, row(i)) > T::zero())
            });
            if let Some(i) = candidate {
                centroids[c * dim..(c + 1) * dim].copy_from_slice(row(i));
            }
        }
    }
    KMeansFit {
        centroids,
        error_trace,
    }
}
