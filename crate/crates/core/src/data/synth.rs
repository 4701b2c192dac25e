//! Deterministic synthetic stand-in for backbone activations.
//!
//! Every category owns a smooth mean field per layer and channel. A sample
//! adds unit-variance spatially smoothed Gaussian noise to it. Anomalous test
//! samples additionally shift every channel by `delta_sigma` (sign fixed per
//! category and channel) inside a rectangle aligned to the coarsest layer's
//! cells. The pixel image is rendered from the first three channels of the
//! shallowest layer, so image-based scenarios see the same defect.

use std::f64::consts::TAU;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::{CategoryData, DataError, Dataset, Sample};
use crate::detector::bilinear_upsample;
use crate::model::{FeatureStack, FeatureTensor, Label, Mask, Raster};

pub const ANOMALY_DEFECT: &str = "shift";
const PIXEL_OFFSET: f64 = 128.0;
const PIXEL_GAIN: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerShape {
    pub layer: u8,
    pub channels: usize,
    pub side: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub categories: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub anomaly_fraction: f64,
    /// Shift of anomalous cells in units of the noise standard deviation.
    pub delta_sigma: f64,
    pub layers: Vec<LayerShape>,
    pub image_side: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            categories: vec!["bottle".into(), "carpet".into()],
            n_train: 20,
            n_test: 40,
            anomaly_fraction: 0.5,
            delta_sigma: 6.0,
            layers: vec![
                LayerShape { layer: 1, channels: 128, side: 14 },
                LayerShape { layer: 2, channels: 192, side: 7 },
                LayerShape { layer: 3, channels: 192, side: 7 },
            ],
            image_side: 224,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::Synthetic(msg));
        if self.categories.is_empty() {
            return bad("no categories".into());
        }
        if self.n_train == 0 {
            return bad("n_train must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.anomaly_fraction) {
            return bad(format!("anomaly_fraction {} outside [0, 1]", self.anomaly_fraction));
        }
        if !self.delta_sigma.is_finite() {
            return bad("delta_sigma must be finite".into());
        }
        let Some(first) = self.layers.first() else {
            return bad("no layers".into());
        };
        if first.channels < 3 {
            return bad("the shallowest layer needs at least 3 channels to render images".into());
        }
        let coarse = self.coarse_side();
        for pair in self.layers.windows(2) {
            if pair[1].layer <= pair[0].layer {
                return bad("layer indices must increase".into());
            }
        }
        for l in &self.layers {
            if l.channels == 0 || l.side == 0 || l.side % coarse != 0 || first.side % l.side != 0 {
                return bad(format!("layer {} side {} does not nest", l.layer, l.side));
            }
        }
        if coarse < 2 || self.image_side % coarse != 0 || self.image_side < first.side {
            return bad(format!(
                "image side {} is not a multiple of the coarsest side {coarse}",
                self.image_side
            ));
        }
        Ok(())
    }

    fn coarse_side(&self) -> usize {
        self.layers.iter().map(|l| l.side).min().unwrap_or(1)
    }

    /// Number of anomalous test samples per category.
    pub fn anomalous_count(&self) -> usize {
        (self.anomaly_fraction * self.n_test as f64).round() as usize
    }
}

fn stream(seed: u64, category: usize, item: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((category as u64) << 32) | item as u64);
    rng
}

/// Smooth deterministic mean of one channel: a product of two sinusoids over
/// normalised coordinates.
struct Wave {
    fy: f64,
    py: f64,
    fx: f64,
    px: f64,
}

struct CategoryModel {
    /// `waves[layer][channel]`
    waves: Vec<Vec<Wave>>,
    /// `signs[layer][channel]`
    signs: Vec<Vec<f64>>,
    anomalous: Vec<bool>,
}

impl CategoryModel {
    fn new(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Self {
        let freq = Uniform::new(0.3, 1.2).expect("valid range");
        let phase = Uniform::new(0.0, TAU).expect("valid range");
        let waves = spec
            .layers
            .iter()
            .map(|l| {
                (0..l.channels)
                    .map(|_| Wave {
                        fy: freq.sample(rng),
                        py: phase.sample(rng),
                        fx: freq.sample(rng),
                        px: phase.sample(rng),
                    })
                    .collect()
            })
            .collect();
        let signs = spec
            .layers
            .iter()
            .map(|l| {
                (0..l.channels)
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        let mut anomalous = vec![false; spec.n_test];
        for i in index::sample(rng, spec.n_test, spec.anomalous_count().min(spec.n_test)) {
            anomalous[i] = true;
        }
        Self {
            waves,
            signs,
            anomalous,
        }
    }
}

/// Unit-variance noise field: white Gaussian noise on a one-cell larger
/// border, a separable `[1, 2, 1] / 4` blur without padding, rescaled by the
/// blur's gain.
fn noise_field(side: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = side + 2;
    let white: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
    let gain = 0.375; // sqrt of the summed squared 2-D weights, 6/16
    let k = [0.25, 0.5, 0.25];
    let mut out = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let mut acc = 0.0;
            for (dy, ky) in k.iter().enumerate() {
                for (dx, kx) in k.iter().enumerate() {
                    acc += ky * kx * white[(y + dy) * n + x + dx];
                }
            }
            out.push(acc / gain);
        }
    }
    out
}

/// Anomalous rectangle in coarse cells: `(row, col, height, width)`.
type Rect = (usize, usize, usize, usize);

fn draw_rect(coarse: usize, rng: &mut ChaCha8Rng) -> Rect {
    let max_extent = 3.min(coarse);
    let min_extent = 2.min(max_extent);
    let h = rng.random_range(min_extent..=max_extent);
    let w = rng.random_range(min_extent..=max_extent);
    (
        rng.random_range(0..=coarse - h),
        rng.random_range(0..=coarse - w),
        h,
        w,
    )
}

fn render_image(first: &FeatureTensor<f32>, image_side: usize) -> Raster {
    let side = first.height();
    let mut raster = Raster::zeros(image_side, image_side, 3);
    for k in 0..3 {
        let plane: Vec<f64> = first.values()[k * side * side..(k + 1) * side * side]
            .iter()
            .map(|&v| v as f64)
            .collect();
        let up = bilinear_upsample(&plane, side, side, image_side, image_side);
        for (i, v) in up.iter().enumerate() {
            let px = (PIXEL_OFFSET + PIXEL_GAIN * v).round().clamp(0.0, 255.0) as u8;
            raster.set(i / image_side, i % image_side, k, px);
        }
    }
    raster
}

fn make_sample(
    spec: &SyntheticSpec,
    model: &CategoryModel,
    category: &str,
    id: String,
    anomalous: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Sample, DataError> {
    let coarse = spec.coarse_side();
    let rect = anomalous.then(|| draw_rect(coarse, rng));
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (li, shape) in spec.layers.iter().enumerate() {
        let s = shape.side;
        let scale = s / coarse;
        let mut values = Vec::with_capacity(shape.channels * s * s);
        for c in 0..shape.channels {
            let wave = &model.waves[li][c];
            let noise = noise_field(s, rng);
            for h in 0..s {
                let u = (h as f64 + 0.5) / s as f64;
                for w in 0..s {
                    let v = (w as f64 + 0.5) / s as f64;
                    let mut x = (TAU * wave.fy * u + wave.py).sin() * (TAU * wave.fx * v + wave.px).cos()
                        + noise[h * s + w];
                    if let Some((r0, c0, rh, rw)) = rect {
                        let inside = (r0 * scale..(r0 + rh) * scale).contains(&h)
                            && (c0 * scale..(c0 + rw) * scale).contains(&w);
                        if inside {
                            x += spec.delta_sigma * model.signs[li][c];
                        }
                    }
                    values.push(x as f32);
                }
            }
        }
        layers.push(FeatureTensor::new(shape.layer, shape.channels, s, s, values)?);
    }
    let side = spec.image_side;
    let mask = rect.map(|(r0, c0, rh, rw)| {
        let px = side / coarse;
        let mut m = Mask::empty(side, side);
        for y in r0 * px..(r0 + rh) * px {
            for x in c0 * px..(c0 + rw) * px {
                m.data[y * side + x] = 1;
            }
        }
        m
    });
    let label = if anomalous {
        Label::Anomalous
    } else {
        Label::Normal
    };
    let image = render_image(&layers[0], side);
    let stack = FeatureStack::new(id.clone(), category, label, mask.clone(), layers)?;
    Ok(Sample {
        id,
        label,
        mask,
        image: Some(image),
        features: Some(stack),
    })
}

/// Generates one category; `index` selects its independent random streams.
pub fn generate_category(
    spec: &SyntheticSpec,
    name: &str,
    index: usize,
    seed: u64,
) -> Result<CategoryData, DataError> {
    spec.validate()?;
    let model = CategoryModel::new(spec, &mut stream(seed, index, 0));
    let mut train = Vec::with_capacity(spec.n_train);
    for j in 0..spec.n_train {
        let mut rng = stream(seed, index, 1 + j);
        train.push(make_sample(spec, &model, name, format!("good/train_{j:03}"), false, &mut rng)?);
    }
    let mut test = Vec::with_capacity(spec.n_test);
    for j in 0..spec.n_test {
        let mut rng = stream(seed, index, 1 + spec.n_train + j);
        let anomalous = model.anomalous[j];
        let defect = if anomalous { ANOMALY_DEFECT } else { "good" };
        test.push(make_sample(
            spec,
            &model,
            name,
            format!("{defect}/test_{j:03}"),
            anomalous,
            &mut rng,
        )?);
    }
    Ok(CategoryData {
        name: name.to_string(),
        train,
        test,
    })
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset, DataError> {
    spec.validate()?;
    let categories = spec
        .categories
        .iter()
        .enumerate()
        .map(|(i, name)| generate_category(spec, name, i, seed))
        .collect::<Result<_, _>>()?;
    Ok(Dataset { categories })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            categories: vec!["grid".into()],
            n_train: 2,
            n_test: 6,
            layers: vec![
                LayerShape { layer: 1, channels: 4, side: 8 },
                LayerShape { layer: 2, channels: 2, side: 4 },
            ],
            image_side: 32,
            ..Default::default()
        }
    }

    #[test]
    fn labels_and_masks_agree() {
        let d = generate_synthetic(&small(), 3).unwrap();
        let cat = &d.categories[0];
        assert_eq!(cat.test.iter().filter(|s| s.label == Label::Anomalous).count(), 3);
        for s in cat.train.iter().chain(&cat.test) {
            let positive = s.mask.as_ref().is_some_and(|m| m.positive_count() > 0);
            assert_eq!(positive, s.label == Label::Anomalous, "{}", s.id);
        }
    }

    #[test]
    fn zero_fraction_gives_only_normal_tests() {
        let spec = SyntheticSpec {
            anomaly_fraction: 0.0,
            ..small()
        };
        let d = generate_synthetic(&spec, 1).unwrap();
        assert!(d.categories[0].test.iter().all(|s| s.label == Label::Normal));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic(&small(), 11).unwrap();
        let b = generate_synthetic(&small(), 11).unwrap();
        let c = generate_synthetic(&small(), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_has_roughly_unit_variance() {
        let mut rng = stream(0, 0, 0);
        let v: Vec<f64> = (0..200).flat_map(|_| noise_field(16, &mut rng)).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.05 && (var - 1.0).abs() < 0.1, "{mean} {var}");
    }

    #[test]
    fn rejects_non_nesting_layers() {
        let mut spec = small();
        spec.layers[1].side = 3;
        assert!(matches!(spec.validate(), Err(DataError::Synthetic(_))));
    }
}
