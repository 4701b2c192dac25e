mod common;

use edgevad::pq::{pq_decode, pq_encode, pq_train, reconstruction_error, Codebook};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Plain Lloyd from `k` distinct random data points, run to convergence.
fn lloyd_sse(points: &[Vec<f32>], k: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut centroids: Vec<Vec<f64>> = index::sample(rng, points.len(), k)
        .into_iter()
        .map(|i| points[i].iter().map(|&v| v as f64).collect())
        .collect();
    let dim = points[0].len();
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..200 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = (0, f64::INFINITY);
            for (c, cen) in centroids.iter().enumerate() {
                let d: f64 = p.iter().zip(cen).map(|(a, b)| (*a as f64 - b).powi(2)).sum();
                if d < best.1 {
                    best = (c, d);
                }
            }
            if assign[i] != best.0 {
                assign[i] = best.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, cen) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f32>> = points.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for j in 0..dim {
                cen[j] = members.iter().map(|m| m[j] as f64).sum::<f64>() / members.len() as f64;
            }
        }
    }
    points
        .iter()
        .zip(&assign)
        .map(|(p, &a)| p.iter().zip(&centroids[a]).map(|(x, c)| (*x as f64 - c).powi(2)).sum::<f64>())
        .sum()
}

#[test]
fn training_is_within_five_percent_of_the_best_of_fifty_restarts() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let data = common::random_vectors(&mut rng, 200, 8);
    let cb: Codebook<f32> = pq_train(&data, 2, 4, 100, 9).unwrap();
    let decoded = pq_decode(&pq_encode(&data, &cb).unwrap(), &cb).unwrap();
    let ours = reconstruction_error(&data, &decoded) * data.len() as f64;

    // subspaces are independent, so the best total is the sum of the best
    // per-subspace errors
    let mut oracle = 0.0;
    for j in 0..2 {
        let sub: Vec<Vec<f32>> = data.iter().map(|v| v[j * 4..(j + 1) * 4].to_vec()).collect();
        let best = (0..50)
            .map(|_| lloyd_sse(&sub, 4, &mut rng))
            .fold(f64::INFINITY, f64::min);
        oracle += best;
    }
    assert!(ours <= oracle * 1.05, "ours {ours}, best of 50 restarts {oracle}");
}

#[test]
fn encoding_matches_an_exhaustive_scan_for_larger_codebooks() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data = common::random_vectors(&mut rng, 300, 12);
    let cb: Codebook<f32> = pq_train(&data, 3, 16, 15, 1).unwrap();
    let codes = pq_encode(&data, &cb).unwrap();
    for (i, v) in data.iter().enumerate() {
        for j in 0..3 {
            let want = common::brute_nearest_centroid(cb.subspace(j), 4, &v[j * 4..(j + 1) * 4]);
            assert_eq!(codes.vector_codes(i)[j] as usize, want, "vector {i}, subspace {j}");
        }
    }
}
