//! Server-side memory-bank detector.
//!
//! Normal patch vectors are pooled, thinned by greedy k-center selection and
//! kept as the memory bank. A test patch scores its exact Euclidean distance
//! to the nearest bank row; the image score is the largest patch score.

mod map;

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::codecs::SampledPatchSet;
use crate::model::{PatchFeature, PatchGrid};
use crate::scalar::{ceil_count, squared_distance, Scalar};
use crate::wire::{ByteReader, ByteWriter, FormatError};

pub use self::map::{bilinear_upsample, gaussian_smooth, make_anomaly_map, AnomalyMap};

pub const BANK_MAGIC: &[u8; 4] = b"VBNK";
pub const BANK_VERSION: u8 = 1;
pub const DEFAULT_SIGMA: f64 = 4.0;
pub const DEFAULT_CORESET_RATIO: f64 = 0.1;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("no feature vectors given")]
    Empty,
    #[error("coreset ratio {0} is outside (0, 1]")]
    InvalidRatio(f64),
    #[error("vector dimension {found} does not match the expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in feature vector {0}")]
    NonFinite(usize),
    #[error("invalid map geometry: {0}")]
    Geometry(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Greedy k-center selection of `ceil(ratio * n)` rows of the row-major
/// `n x dim` matrix `features`. The first row is drawn from a ChaCha8 stream
/// seeded with `seed`; every further pick maximises the distance to the
/// already selected rows (lowest index on ties). Indices come back in
/// selection order.
pub fn coreset_select<T: Scalar>(
    features: &[T],
    dim: usize,
    ratio: f64,
    seed: u64,
) -> Result<Vec<usize>, DetectorError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(DetectorError::InvalidRatio(ratio));
    }
    let n = row_count(features, dim)?;
    let count = ceil_count(ratio, n).clamp(1, n);
    let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..n);
    Ok(coreset_select_from(features, dim, count, start))
}

/// Greedy k-center selection of `count` rows starting from row `start`.
pub fn coreset_select_from<T: Scalar>(
    features: &[T],
    dim: usize,
    count: usize,
    start: usize,
) -> Vec<usize> {
    let n = features.len() / dim;
    assert!(start < n, "start row {start} out of {n}");
    let count = count.min(n);
    let row = |i: usize| &features[i * dim..(i + 1) * dim];
    let mut selected = Vec::with_capacity(count);
    let mut min_dist = vec![T::infinity(); n];
    let mut next = start;
    while selected.len() < count {
        selected.push(next);
        let pick = row(next);
        min_dist.par_iter_mut().enumerate().for_each(|(i, d)| {
            let dd = squared_distance(row(i), pick);
            if dd < *d {
                *d = dd;
            }
        });
        let mut best = 0;
        for (i, &d) in min_dist.iter().enumerate() {
            if d > min_dist[best] {
                best = i;
            }
        }
        next = best;
    }
    selected
}

fn row_count<T: Scalar>(features: &[T], dim: usize) -> Result<usize, DetectorError> {
    if dim == 0 || features.is_empty() {
        return Err(DetectorError::Empty);
    }
    if features.len() % dim != 0 {
        return Err(DetectorError::DimensionMismatch {
            expected: dim,
            found: features.len() % dim,
        });
    }
    Ok(features.len() / dim)
}

/// Normal patch vectors kept for nearest-neighbour scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank<T> {
    dim: usize,
    entries: Vec<T>,
    seed: u64,
    /// Ratio used for the coreset; unknown for banks read from disk.
    pub coreset_ratio: Option<f64>,
    /// Number of distinct pooled vectors the coreset was drawn from.
    pub source_count: Option<usize>,
}

impl<T: Scalar> MemoryBank<T> {
    /// Wraps `entries` (`M x dim`, row-major) as a bank without selection.
    pub fn from_entries(dim: usize, entries: Vec<T>, seed: u64) -> Result<Self, DetectorError> {
        row_count(&entries, dim)?;
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(DetectorError::NonFinite(i / dim));
        }
        Ok(Self {
            dim,
            entries,
            seed,
            coreset_ratio: None,
            source_count: None,
        })
    }

    /// Pools `vectors`, drops exact duplicates (first occurrence wins) and
    /// keeps the greedy k-center coreset of the remaining rows.
    pub fn build<V: AsRef<[T]>>(vectors: &[V], ratio: f64, seed: u64) -> Result<Self, DetectorError> {
        let dim = vectors.first().ok_or(DetectorError::Empty)?.as_ref().len();
        let mut seen = HashSet::new();
        let mut pool = Vec::with_capacity(vectors.len() * dim);
        for (i, v) in vectors.iter().enumerate() {
            let v = v.as_ref();
            if v.len() != dim {
                return Err(DetectorError::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(DetectorError::NonFinite(i));
            }
            let key: Vec<u64> = v.iter().map(|x| x.as_f64().to_bits()).collect();
            if seen.insert(key) {
                pool.extend_from_slice(v);
            }
        }
        let unique = pool.len() / dim.max(1);
        let selected = coreset_select(&pool, dim, ratio, seed)?;
        let mut entries = Vec::with_capacity(selected.len() * dim);
        for i in selected {
            entries.extend_from_slice(&pool[i * dim..(i + 1) * dim]);
        }
        Ok(Self {
            dim,
            entries,
            seed,
            coreset_ratio: Some(ratio),
            source_count: Some(unique),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &[T] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    /// Exact Euclidean distance from `v` to its nearest bank row.
    pub fn nearest_distance(&self, v: &[T]) -> f64 {
        self.entries
            .chunks_exact(self.dim)
            .map(|e| squared_distance(v, e))
            .fold(T::infinity(), T::min)
            .as_f64()
            .sqrt()
    }
}

/// Pools every patch of every grid into one bank.
pub fn build_memory_bank<T: Scalar>(
    grids: &[PatchGrid<T>],
    ratio: f64,
    seed: u64,
) -> Result<MemoryBank<T>, DetectorError> {
    let vectors: Vec<&[T]> = grids
        .iter()
        .flat_map(|g| g.patches().iter().map(|p| p.vector.as_slice()))
        .collect();
    MemoryBank::build(&vectors, ratio, seed)
}

impl MemoryBank<f32> {
    /// `"VBNK" | version u8 | M u32 | d u32 | seed u64 | M x d f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_capacity(21 + 4 * self.entries.len());
        w.bytes(BANK_MAGIC);
        w.u8(BANK_VERSION);
        w.u32(self.len() as u32);
        w.u32(self.dim as u32);
        w.u64(self.seed);
        w.f32_slice(&self.entries);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DetectorError> {
        let mut r = ByteReader::new(bytes);
        r.magic(BANK_MAGIC)?;
        r.version(BANK_VERSION)?;
        let m = r.u32()? as usize;
        let d = r.u32()? as usize;
        let seed = r.u64()?;
        if r.remaining() != m * d * 4 {
            return Err(FormatError::SizeMismatch(format!(
                "{} row bytes for a {m}x{d} bank (expected {})",
                r.remaining(),
                m * d * 4
            ))
            .into());
        }
        let entries = r.f32_vec(m * d)?;
        r.finish()?;
        Self::from_entries(d, entries, seed)
    }
}

/// Patch scores on the full grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchScores {
    pub rows: usize,
    pub cols: usize,
    pub scores: Vec<f64>,
    /// Largest score among the patches actually scored.
    pub max_observed: f64,
}

impl PatchScores {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.cols + col]
    }
}

/// Scores the given patches of a `rows x cols` grid. Cells without a patch
/// take the score of the nearest scored cell in grid distance; ties go to the
/// first such cell in row-major order.
pub fn score_patches<T: Scalar>(
    bank: &MemoryBank<T>,
    rows: usize,
    cols: usize,
    patches: &[PatchFeature<T>],
) -> Result<PatchScores, DetectorError> {
    if patches.is_empty() {
        return Err(DetectorError::Empty);
    }
    for p in patches {
        if p.vector.len() != bank.dim {
            return Err(DetectorError::DimensionMismatch {
                expected: bank.dim,
                found: p.vector.len(),
            });
        }
        if p.row >= rows || p.col >= cols {
            return Err(DetectorError::Geometry(format!(
                "patch ({}, {}) outside {rows}x{cols}",
                p.row, p.col
            )));
        }
    }
    let observed: Vec<f64> = patches
        .par_iter()
        .map(|p| bank.nearest_distance(&p.vector))
        .collect();
    let mut order: Vec<usize> = (0..patches.len()).collect();
    order.sort_by_key(|&i| (patches[i].row, patches[i].col));

    let mut scores = vec![f64::NAN; rows * cols];
    for &i in &order {
        scores[patches[i].row * cols + patches[i].col] = observed[i];
    }
    if patches.len() < rows * cols {
        let filled = scores.clone();
        for r in 0..rows {
            for c in 0..cols {
                if !filled[r * cols + c].is_nan() {
                    continue;
                }
                let mut best = (usize::MAX, f64::NAN);
                for &i in &order {
                    let (pr, pc) = (patches[i].row, patches[i].col);
                    let d = pr.abs_diff(r).pow(2) + pc.abs_diff(c).pow(2);
                    if d < best.0 {
                        best = (d, observed[i]);
                    }
                }
                scores[r * cols + c] = best.1;
            }
        }
    }
    let max_observed = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(PatchScores {
        rows,
        cols,
        scores,
        max_observed,
    })
}

pub fn score_grid<T: Scalar>(
    bank: &MemoryBank<T>,
    grid: &PatchGrid<T>,
) -> Result<PatchScores, DetectorError> {
    score_patches(bank, grid.rows(), grid.cols(), grid.patches())
}

pub fn score_sampled<T: Scalar>(
    bank: &MemoryBank<T>,
    set: &SampledPatchSet<T>,
) -> Result<PatchScores, DetectorError> {
    score_patches(bank, set.source_rows, set.source_cols, &set.patches)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyResult {
    pub image_id: String,
    /// Largest nearest-neighbour distance over the scored patches.
    pub image_score: f64,
    pub patch_scores: PatchScores,
    pub anomaly_map: AnomalyMap,
}

/// Scores the patches and renders the anomaly map at `out_h x out_w`.
pub fn detect<T: Scalar>(
    bank: &MemoryBank<T>,
    image_id: impl Into<String>,
    rows: usize,
    cols: usize,
    patches: &[PatchFeature<T>],
    out_h: usize,
    out_w: usize,
    sigma: f64,
) -> Result<AnomalyResult, DetectorError> {
    let patch_scores = score_patches(bank, rows, cols, patches)?;
    let anomaly_map = make_anomaly_map(&patch_scores.scores, rows, cols, out_h, out_w, sigma)?;
    Ok(AnomalyResult {
        image_id: image_id.into(),
        image_score: patch_scores.max_observed,
        patch_scores,
        anomaly_map,
    })
}
