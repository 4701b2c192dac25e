//! Detection metrics and their relative change against a baseline scenario.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::AnomalyMap;
use crate::model::Mask;

/// Upper bound on the thresholds tried by [`pixel_f1_best`].
pub const MAX_F1_THRESHOLDS: usize = 1024;

/// MVTec AD categories counted as textures; every other name is an object.
pub const TEXTURE_CATEGORIES: [&str; 5] = ["carpet", "grid", "leather", "tile", "wood"];

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{labels} labels for {scores} scores")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("ROC AUC needs both classes; got {positives} positives and {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("mask {index} is {mask_h}x{mask_w} but its map is {map_h}x{map_w}")]
    ShapeMismatch {
        index: usize,
        mask_h: usize,
        mask_w: usize,
        map_h: usize,
        map_w: usize,
    },
    #[error("no positive pixels in any mask")]
    NoPositivePixels,
    #[error("baseline value is zero")]
    ZeroBaseline,
}

/// Mann-Whitney estimate of the ROC AUC: the fraction of (positive, negative)
/// pairs ranked correctly, ties counting one half. `O(n log n)` via mid-ranks.
pub fn roc_auc(labels: &[bool], scores: &[f64]) -> Result<f64, MetricError> {
    if labels.len() != scores.len() {
        return Err(MetricError::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(i));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::SingleClass {
            positives,
            negatives,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Count, per tie group, the negatives strictly below plus half of the
    // negatives inside the group, for every positive in the group.
    let mut negatives_below = 0u64;
    let mut twice_u = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let group_pos = order[i..j].iter().filter(|&&k| labels[k]).count() as u64;
        let group_neg = (j - i) as u64 - group_pos;
        twice_u += group_pos * (2 * negatives_below + group_neg);
        negatives_below += group_neg;
        i = j;
    }
    Ok(twice_u as f64 / (2.0 * positives as f64 * negatives as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Best {
    pub f1: f64,
    /// Pixels with a map value at or above this threshold are predicted
    /// anomalous.
    pub threshold: f64,
}

/// Best F1 over one global threshold applied to every pixel of every map.
/// Candidate thresholds are the distinct map values, thinned to at most
/// [`MAX_F1_THRESHOLDS`] order statistics, refined around the peak.
pub fn pixel_f1_best(masks: &[&Mask], maps: &[&AnomalyMap]) -> Result<F1Best, MetricError> {
    pixel_f1_best_with(masks, maps, MAX_F1_THRESHOLDS)
}

pub fn pixel_f1_best_with(
    masks: &[&Mask],
    maps: &[&AnomalyMap],
    max_thresholds: usize,
) -> Result<F1Best, MetricError> {
    if masks.len() != maps.len() {
        return Err(MetricError::LengthMismatch {
            labels: masks.len(),
            scores: maps.len(),
        });
    }
    let total: usize = maps.iter().map(|m| m.values.len()).sum();
    let mut pixels: Vec<(f64, bool)> = Vec::with_capacity(total);
    for (index, (mask, map)) in masks.iter().zip(maps).enumerate() {
        if mask.height != map.height || mask.width != map.width {
            return Err(MetricError::ShapeMismatch {
                index,
                mask_h: mask.height,
                mask_w: mask.width,
                map_h: map.height,
                map_w: map.width,
            });
        }
        for (p, &v) in map.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(MetricError::NonFinite(pixels.len()));
            }
            pixels.push((v, mask.is_positive(p)));
        }
    }
    let (values, labels): (Vec<f64>, Vec<bool>) = pixels.into_iter().unzip();
    best_f1_pooled(&values, &labels, max_thresholds)
}

/// Indices `lo..=hi` of `unique`, thinned to at most `count` evenly spaced
/// order statistics (both ends kept).
fn spaced(unique: &[f64], lo: usize, hi: usize, count: usize) -> impl Iterator<Item = f64> + '_ {
    let span = hi - lo;
    let steps = span.min(count.max(2) - 1).max(1);
    (0..=steps).map(move |s| unique[lo + (s as f64 * span as f64 / steps as f64).round() as usize])
}

/// Candidate thresholds, ascending. When there are more distinct values than
/// the budget, half of it goes to an even sweep over the order statistics
/// and the rest to a finer sweep between the neighbours of the best coarse
/// candidate, where the F1 peak is. Everything is rank based, so the set
/// follows any strictly increasing transform of the values.
fn threshold_candidates(unique: &[f64], max_thresholds: usize, f1_at: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let budget = max_thresholds.max(4);
    if unique.len() <= budget {
        return unique.to_vec();
    }
    let last = unique.len() - 1;
    let coarse_n = budget / 2;
    let steps = coarse_n - 1;
    let coarse_idx: Vec<usize> = (0..=steps)
        .map(|s| (s as f64 * last as f64 / steps as f64).round() as usize)
        .collect();
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, &k) in coarse_idx.iter().enumerate() {
        let f1 = f1_at(unique[k]);
        if f1 > best.1 {
            best = (i, f1);
        }
    }
    let lo = coarse_idx[best.0.saturating_sub(1)];
    let hi = coarse_idx[(best.0 + 1).min(steps)];
    let mut out: Vec<f64> = coarse_idx.iter().map(|&k| unique[k]).collect();
    out.extend(spaced(unique, lo, hi, budget - coarse_n));
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Same sweep over already pooled `(value, label)` pixels.
pub fn best_f1_pooled(values: &[f64], labels: &[bool], max_thresholds: usize) -> Result<F1Best, MetricError> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    // positives_from[i] = positives among sorted[i..]
    let mut positives_from = vec![0usize; sorted.len() + 1];
    for (i, &k) in order.iter().enumerate().rev() {
        positives_from[i] = positives_from[i + 1] + labels[k] as usize;
    }
    let positives = positives_from[0];
    if positives == 0 {
        return Err(MetricError::NoPositivePixels);
    }

    let mut unique = sorted.clone();
    unique.dedup();
    let f1_at = |t: f64| {
        let first = sorted.partition_point(|&v| v < t);
        let predicted = sorted.len() - first;
        2.0 * positives_from[first] as f64 / (predicted + positives) as f64
    };
    let candidates = threshold_candidates(&unique, max_thresholds, &f1_at);

    let mut best = F1Best {
        f1: 0.0,
        threshold: candidates[0],
    };
    for &t in &candidates {
        let f1 = f1_at(t);
        if f1 > best.f1 {
            best = F1Best { f1, threshold: t };
        }
    }
    Ok(best)
}

/// `100 * (value - baseline) / baseline`.
pub fn delta_percent(value: f64, baseline: f64) -> Result<f64, MetricError> {
    if baseline == 0.0 {
        return Err(MetricError::ZeroBaseline);
    }
    Ok(100.0 * (value - baseline) / baseline)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryKind {
    Object,
    Texture,
}

impl CategoryKind {
    pub fn of(category: &str) -> Self {
        if TEXTURE_CATEGORIES.contains(&category) {
            Self::Texture
        } else {
            Self::Object
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: String,
    pub kind: CategoryKind,
    pub f1_pixel: f64,
    pub roc_image: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub f1_pixel: f64,
    pub roc_image: f64,
}

/// Per-category metrics of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scenario: String,
    pub rows: Vec<CategoryMetrics>,
}

impl MetricReport {
    fn mean_where(&self, keep: impl Fn(&CategoryMetrics) -> bool) -> Option<Aggregate> {
        let rows: Vec<&CategoryMetrics> = self.rows.iter().filter(|r| keep(r)).collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        Some(Aggregate {
            f1_pixel: rows.iter().map(|r| r.f1_pixel).sum::<f64>() / n,
            roc_image: rows.iter().map(|r| r.roc_image).sum::<f64>() / n,
        })
    }

    pub fn objects(&self) -> Option<Aggregate> {
        self.mean_where(|r| r.kind == CategoryKind::Object)
    }

    pub fn textures(&self) -> Option<Aggregate> {
        self.mean_where(|r| r.kind == CategoryKind::Texture)
    }

    /// Unweighted mean over all categories.
    pub fn overall(&self) -> Option<Aggregate> {
        self.mean_where(|_| true)
    }

    /// Relative change of the overall aggregates against `baseline`.
    pub fn delta_vs(&self, baseline: &MetricReport) -> Option<Aggregate> {
        let (v, b) = (self.overall()?, baseline.overall()?);
        Some(Aggregate {
            f1_pixel: delta_percent(v.f1_pixel, b.f1_pixel).ok()?,
            roc_image: delta_percent(v.roc_image, b.roc_image).ok()?,
        })
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"))
}

/// Comparison table with one column per scenario. For each metric it lists
/// the per-kind means, the overall mean, then the overall delta against the
/// report named `baseline`. Comma separated.
pub fn comparison_table(reports: &[MetricReport], baseline: &str) -> String {
    let base = reports.iter().find(|r| r.scenario == baseline);
    let mut out = String::from("metric,class");
    for r in reports {
        out.push(',');
        out.push_str(&r.scenario);
    }
    out.push('\n');
    type Pick = fn(&Aggregate) -> f64;
    let metrics: [(&str, Pick); 2] = [
        ("f1_pixel", |a| a.f1_pixel),
        ("roc_image", |a| a.roc_image),
    ];
    for (name, pick) in metrics {
        let classes: [(&str, fn(&MetricReport) -> Option<Aggregate>); 3] = [
            ("objects", MetricReport::objects),
            ("textures", MetricReport::textures),
            ("overall", MetricReport::overall),
        ];
        for (class, agg) in classes {
            let _ = write!(out, "{name},{class}");
            for r in reports {
                let _ = write!(out, ",{}", cell(agg(r).map(|a| pick(&a))));
            }
            out.push('\n');
        }
        let _ = write!(out, "{name},delta_overall_percent");
        for r in reports {
            let d = base.and_then(|b| r.delta_vs(b)).map(|a| pick(&a));
            let _ = write!(out, ",{}", d.map_or_else(|| "NA".into(), |d| format!("{d:.2}")));
        }
        out.push('\n');
    }
    out
}

/// Per-category rows of every report, comma separated.
pub fn category_table(reports: &[MetricReport]) -> String {
    let mut out = String::from("scenario,category,kind,f1_pixel,roc_image\n");
    for r in reports {
        for row in &r.rows {
            let kind = match row.kind {
                CategoryKind::Object => "object",
                CategoryKind::Texture => "texture",
            };
            let _ = writeln!(
                out,
                "{},{},{kind},{:.6},{:.6}",
                r.scenario, row.category, row.f1_pixel, row.roc_image
            );
        }
    }
    out
}
