//! 8-bit tiling of feature maps so a still-image codec can compress them.
//!
//! Each channel of a `C x H x W` tensor becomes one `H x W` tile of a mosaic
//! with `ceil(sqrt(C))` tiles per row; values are linearly quantized to 8 bits
//! over the tensor's `[min, max]` range (or per channel, see [`RangeMode`]).

use super::{grid_side, CodecError, CodecRegistry, Payload, PayloadKind, PlaneCodec};
use crate::model::{FeatureStack, FeatureTensor, PatchFeature, Raster};
use crate::scalar::Scalar;
use crate::wire::{ByteReader, ByteWriter};

use super::SampledPatchSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeMode {
    /// One `[min, max]` for the whole tensor.
    #[default]
    PerTensor,
    /// One range per channel, carried in the payload header.
    PerChannel,
}

/// Layout and dequantization parameters of one tiled tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TilePlan {
    pub layer: u8,
    pub tiles_per_row: usize,
    pub tiles_per_col: usize,
    pub channel_count: usize,
    pub tile_h: usize,
    pub tile_w: usize,
    pub value_min: f64,
    pub value_max: f64,
    /// Present only in [`RangeMode::PerChannel`].
    pub channel_ranges: Option<Vec<(f64, f64)>>,
}

impl TilePlan {
    pub fn plane_height(&self) -> usize {
        self.tiles_per_col * self.tile_h
    }

    pub fn plane_width(&self) -> usize {
        self.tiles_per_row * self.tile_w
    }

    fn range(&self, channel: usize) -> (f64, f64) {
        match &self.channel_ranges {
            Some(r) => r[channel],
            None => (self.value_min, self.value_max),
        }
    }

    fn tile_origin(&self, channel: usize) -> (usize, usize) {
        (
            (channel / self.tiles_per_row) * self.tile_h,
            (channel % self.tiles_per_row) * self.tile_w,
        )
    }
}

fn quantize(x: f64, min: f64, max: f64) -> u8 {
    if max <= min {
        return 0;
    }
    (255.0 * (x - min) / (max - min)).round().clamp(0.0, 255.0) as u8
}

fn dequantize(q: u8, min: f64, max: f64) -> f64 {
    min + q as f64 / 255.0 * (max - min)
}

fn value_range<T: Scalar>(values: impl Iterator<Item = T>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        let v = v.as_f64();
        (lo.min(v), hi.max(v))
    });
    if lo > hi {
        (0.0, 0.0)
    } else {
        (lo, hi)
    }
}

/// Packs with the per-tensor range.
pub fn tile_pack<T: Scalar>(tensor: &FeatureTensor<T>) -> (Raster, TilePlan) {
    tile_pack_with(tensor, RangeMode::PerTensor)
}

pub fn tile_pack_with<T: Scalar>(tensor: &FeatureTensor<T>, mode: RangeMode) -> (Raster, TilePlan) {
    pack_masked(tensor, None, mode)
}

/// `keep[h * W + w] == false` cells are left at 0 in the plane and excluded
/// from the range computation.
fn pack_masked<T: Scalar>(
    tensor: &FeatureTensor<T>,
    keep: Option<&[bool]>,
    mode: RangeMode,
) -> (Raster, TilePlan) {
    let (c, h, w) = (tensor.channels(), tensor.height(), tensor.width());
    let tiles_per_row = (c as f64).sqrt().ceil() as usize;
    let tiles_per_col = c.div_ceil(tiles_per_row);
    let kept = |i: usize| keep.is_none_or(|k| k[i]);
    let channel_values = |ch: usize| {
        let vals = &tensor.values()[ch * h * w..(ch + 1) * h * w];
        vals.iter()
            .enumerate()
            .filter(move |(i, _)| kept(*i))
            .map(|(_, v)| *v)
    };
    let (value_min, value_max) = value_range((0..c).flat_map(channel_values));
    let channel_ranges = match mode {
        RangeMode::PerTensor => None,
        RangeMode::PerChannel => Some((0..c).map(|ch| value_range(channel_values(ch))).collect()),
    };
    let plan = TilePlan {
        layer: tensor.layer(),
        tiles_per_row,
        tiles_per_col,
        channel_count: c,
        tile_h: h,
        tile_w: w,
        value_min,
        value_max,
        channel_ranges,
    };
    let mut plane = Raster::zeros(plan.plane_height(), plan.plane_width(), 1);
    for ch in 0..c {
        let (min, max) = plan.range(ch);
        let (oy, ox) = plan.tile_origin(ch);
        for y in 0..h {
            for x in 0..w {
                if kept(y * w + x) {
                    let q = quantize(tensor.at(ch, y, x).as_f64(), min, max);
                    plane.set(oy + y, ox + x, 0, q);
                }
            }
        }
    }
    (plane, plan)
}

/// Dequantizes `x = min + q / 255 * (max - min)` tile by tile.
pub fn tile_unpack<T: Scalar>(plane: &Raster, plan: &TilePlan) -> Result<FeatureTensor<T>, CodecError> {
    if plane.channels != 1
        || plane.height != plan.plane_height()
        || plane.width != plan.plane_width()
        || plan.tiles_per_row * plan.tiles_per_col < plan.channel_count
    {
        return Err(CodecError::Dimension(format!(
            "plane {}x{}x{} does not match plan {}x{} tiles of {}x{}",
            plane.height,
            plane.width,
            plane.channels,
            plan.tiles_per_col,
            plan.tiles_per_row,
            plan.tile_h,
            plan.tile_w
        )));
    }
    let (h, w) = (plan.tile_h, plan.tile_w);
    let mut values = Vec::with_capacity(plan.channel_count * h * w);
    for ch in 0..plan.channel_count {
        let (min, max) = plan.range(ch);
        let (oy, ox) = plan.tile_origin(ch);
        for y in 0..h {
            for x in 0..w {
                let v = if max <= min {
                    min
                } else {
                    dequantize(plane.get(oy + y, ox + x, 0), min, max)
                };
                values.push(T::of(v));
            }
        }
    }
    Ok(FeatureTensor::new(
        plan.layer,
        plan.channel_count,
        h,
        w,
        values,
    )?)
}

fn aligned_grid<T: Scalar>(stack: &FeatureStack<T>) -> Result<(usize, usize), CodecError> {
    let rows = stack.layers().iter().map(|l| l.height()).max().unwrap_or(0);
    let cols = stack.layers().iter().map(|l| l.width()).max().unwrap_or(0);
    for l in stack.layers() {
        if rows % l.height() != 0 || cols % l.width() != 0 {
            return Err(CodecError::Dimension(format!(
                "layer {} ({}x{}) does not tile a {rows}x{cols} grid",
                l.layer(),
                l.height(),
                l.width()
            )));
        }
    }
    Ok((rows, cols))
}

const FLAG_COORDINATES: u8 = 1;
const FLAG_PER_CHANNEL: u8 = 2;

/// `tiled_features` payload: every layer of `stack` is tiled separately and
/// compressed with `codec`.
///
/// With `sampled` coordinates (on the aligned patch grid), a layer cell is
/// transmitted only when some sampled location maps onto it; other cells are
/// zeroed in the plane.
///
/// meta: `codec u8 | quality u8 | rows u16 | cols u16 | flags u8 | count u32 |
/// layers u8`, then per layer `layer u8 | tiles_per_row u16 | tiles_per_col u16 |
/// channel_count u16 | tile_h u16 | tile_w u16 | min f32 | max f32 |
/// [C x (min f32, max f32) when per-channel] | plane_len u32`.
/// body: `count x (row u16, col u16)` when sampled, then the encoded planes.
pub fn tiled_features_payload(
    stack: &FeatureStack<f32>,
    sampled: Option<&[(usize, usize)]>,
    quality: u8,
    codec: &dyn PlaneCodec,
    mode: RangeMode,
) -> Result<Payload, CodecError> {
    let (rows, cols) = aligned_grid(stack)?;
    let layers = stack.layers();
    if let Some(coords) = sampled {
        if coords.is_empty() {
            return Err(CodecError::Empty("sampled coordinates"));
        }
        if let Some(&(r, c)) = coords.iter().find(|&&(r, c)| r >= rows || c >= cols) {
            return Err(CodecError::Dimension(format!(
                "sample ({r}, {c}) outside {rows}x{cols} grid"
            )));
        }
    }
    let mut flags = 0u8;
    if sampled.is_some() {
        flags |= FLAG_COORDINATES;
    }
    if mode == RangeMode::PerChannel {
        flags |= FLAG_PER_CHANNEL;
    }
    let count = sampled.map_or(rows * cols, |s| s.len());

    let mut meta = ByteWriter::new();
    meta.u8(codec.id());
    meta.u8(quality);
    meta.u16(grid_side(rows, "grid rows")?);
    meta.u16(grid_side(cols, "grid cols")?);
    meta.u8(flags);
    meta.u32(count as u32);
    meta.u8(layers.len() as u8);

    let mut body = ByteWriter::new();
    if let Some(coords) = sampled {
        for &(r, c) in coords {
            body.u16(r as u16);
            body.u16(c as u16);
        }
    }
    for layer in layers {
        let keep = sampled.map(|coords| {
            let (fr, fc) = (rows / layer.height(), cols / layer.width());
            let mut keep = vec![false; layer.height() * layer.width()];
            for &(r, c) in coords {
                keep[(r / fr) * layer.width() + c / fc] = true;
            }
            keep
        });
        let (plane, plan) = pack_masked(layer, keep.as_deref(), mode);
        let encoded = codec.encode(&plane, quality)?;
        meta.u8(plan.layer);
        meta.u16(grid_side(plan.tiles_per_row, "tiles per row")?);
        meta.u16(grid_side(plan.tiles_per_col, "tiles per column")?);
        meta.u16(grid_side(plan.channel_count, "channel count")?);
        meta.u16(grid_side(plan.tile_h, "tile height")?);
        meta.u16(grid_side(plan.tile_w, "tile width")?);
        meta.f32(plan.value_min as f32);
        meta.f32(plan.value_max as f32);
        if let Some(ranges) = &plan.channel_ranges {
            for &(lo, hi) in ranges {
                meta.f32(lo as f32);
                meta.f32(hi as f32);
            }
        }
        meta.u32(encoded.len() as u32);
        body.bytes(&encoded);
    }
    Ok(Payload::new(
        PayloadKind::TiledFeatures,
        meta.into_inner(),
        body.into_inner(),
    ))
}

/// Server side of [`tiled_features_payload`]: decodes every plane, unpacks
/// the tensors and gathers patch vectors at the transmitted locations (all
/// locations when the payload carries no coordinates).
pub fn tiled_features_decode(
    payload: &Payload,
    registry: &CodecRegistry,
) -> Result<SampledPatchSet<f32>, CodecError> {
    payload.expect_kind(PayloadKind::TiledFeatures)?;
    let mut meta = ByteReader::new(payload.meta());
    let codec = registry.get(meta.u8()?)?;
    let _quality = meta.u8()?;
    let rows = meta.u16()? as usize;
    let cols = meta.u16()? as usize;
    let flags = meta.u8()?;
    let count = meta.u32()? as usize;
    let n_layers = meta.u8()? as usize;
    let mut plans = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let layer = meta.u8()?;
        let tiles_per_row = meta.u16()? as usize;
        let tiles_per_col = meta.u16()? as usize;
        let channel_count = meta.u16()? as usize;
        let tile_h = meta.u16()? as usize;
        let tile_w = meta.u16()? as usize;
        let value_min = meta.f32()? as f64;
        let value_max = meta.f32()? as f64;
        let channel_ranges = if flags & FLAG_PER_CHANNEL != 0 {
            let mut r = Vec::with_capacity(channel_count);
            for _ in 0..channel_count {
                r.push((meta.f32()? as f64, meta.f32()? as f64));
            }
            Some(r)
        } else {
            None
        };
        let plane_len = meta.u32()? as usize;
        if tile_h == 0 || tile_w == 0 || rows % tile_h != 0 || cols % tile_w != 0 {
            return Err(CodecError::Dimension(format!(
                "tile {tile_h}x{tile_w} does not divide the {rows}x{cols} grid"
            )));
        }
        plans.push((
            TilePlan {
                layer,
                tiles_per_row,
                tiles_per_col,
                channel_count,
                tile_h,
                tile_w,
                value_min,
                value_max,
                channel_ranges,
            },
            plane_len,
        ));
    }
    meta.finish()?;

    let mut body = ByteReader::new(payload.body());
    let coords: Vec<(usize, usize)> = if flags & FLAG_COORDINATES != 0 {
        let mut v = Vec::with_capacity(count);
        for _ in 0..count {
            let r = body.u16()? as usize;
            let c = body.u16()? as usize;
            if r >= rows || c >= cols {
                return Err(CodecError::Dimension(format!(
                    "sample ({r}, {c}) outside {rows}x{cols} grid"
                )));
            }
            v.push((r, c));
        }
        v
    } else {
        (0..rows * cols).map(|i| (i / cols, i % cols)).collect()
    };
    let mut tensors: Vec<FeatureTensor<f32>> = Vec::with_capacity(n_layers);
    for (plan, plane_len) in &plans {
        let plane = codec.decode(body.take(*plane_len)?)?;
        tensors.push(tile_unpack(&plane, plan)?);
    }
    body.finish()?;

    let dim: usize = tensors.iter().map(|t| t.channels()).sum();
    let mut patches: Vec<PatchFeature<f32>> = coords
        .into_iter()
        .map(|(row, col)| {
            let mut vector = Vec::with_capacity(dim);
            for t in &tensors {
                let (fr, fc) = (rows / t.height(), cols / t.width());
                vector.extend(t.channel_vector(row / fr, col / fc));
            }
            PatchFeature { row, col, vector }
        })
        .collect();
    patches.sort_by_key(|p| (p.row, p.col));
    Ok(SampledPatchSet {
        source_rows: rows,
        source_cols: cols,
        dim,
        patches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codecs::{rs_encode, LosslessPlaneCodec};
    use crate::model::{build_patch_grid, Label};
    use proptest::prelude::*;

    #[test]
    fn constant_tensor_packs_to_zeros() {
        let t = FeatureTensor::new(1, 3, 2, 2, vec![3.7f32; 12]).unwrap();
        let (plane, plan) = tile_pack(&t);
        assert!(plane.data.iter().all(|&q| q == 0));
        assert_eq!(plan.value_min, 3.7f32 as f64);
        assert_eq!(plan.value_max, 3.7f32 as f64);
        let back: FeatureTensor<f32> = tile_unpack(&plane, &plan).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn four_values_quantize_to_thirds() {
        let t = FeatureTensor::new(1, 1, 2, 2, vec![0.0f32, 1.0, 2.0, 3.0]).unwrap();
        let (plane, plan) = tile_pack(&t);
        // 255 * x / 3 = 0, 85, 170, 255
        assert_eq!(plane.data, vec![0, 85, 170, 255]);
        assert_eq!((plan.value_min, plan.value_max), (0.0, 3.0));
        assert_eq!((plan.tiles_per_row, plan.tiles_per_col), (1, 1));
    }

    #[test]
    fn five_channels_use_three_by_two_tiles() {
        let values: Vec<f32> = (0..5 * 4).map(|i| 1.0 + i as f32).collect();
        let t = FeatureTensor::new(1, 5, 2, 2, values).unwrap();
        let (plane, plan) = tile_pack(&t);
        assert_eq!((plan.tiles_per_row, plan.tiles_per_col), (3, 2));
        assert_eq!((plane.height, plane.width), (4, 6));
        // sixth tile: rows 2..4, cols 4..6
        for y in 2..4 {
            for x in 4..6 {
                assert_eq!(plane.get(y, x, 0), 0);
            }
        }
    }

    #[test]
    fn mismatched_plane_is_rejected() {
        let t = FeatureTensor::new(1, 2, 2, 2, vec![0.5f32; 8]).unwrap();
        let (_, plan) = tile_pack(&t);
        let wrong = Raster::zeros(3, 3, 1);
        assert!(matches!(
            tile_unpack::<f32>(&wrong, &plan),
            Err(CodecError::Dimension(_))
        ));
    }

    proptest! {
        #[test]
        fn round_trip_error_is_half_a_step(
            c in 1usize..7, h in 1usize..5, w in 1usize..5,
            seed in any::<u64>(), per_channel in any::<bool>()
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<f64> = (0..c * h * w).map(|_| rng.random_range(-50.0..50.0)).collect();
            let t = FeatureTensor::new(2, c, h, w, values).unwrap();
            let mode = if per_channel { RangeMode::PerChannel } else { RangeMode::PerTensor };
            let (plane, plan) = tile_pack_with(&t, mode);
            let back: FeatureTensor<f64> = tile_unpack(&plane, &plan).unwrap();
            for ch in 0..c {
                let (lo, hi) = plan.range(ch);
                let bound = (hi - lo) / 510.0 + 1e-12 * hi.abs().max(lo.abs());
                for y in 0..h {
                    for x in 0..w {
                        let err = (t.at(ch, y, x) - back.at(ch, y, x)).abs();
                        prop_assert!(err <= bound, "err {} bound {}", err, bound);
                    }
                }
            }
        }
    }

    fn two_layer_stack() -> FeatureStack<f32> {
        let l1: Vec<f32> = (0..3 * 4 * 4).map(|i| (i as f32 * 0.37).sin()).collect();
        let l2: Vec<f32> = (0..2 * 2 * 2).map(|i| i as f32 - 3.0).collect();
        FeatureStack::new(
            "s",
            "c",
            Label::Normal,
            None,
            vec![
                FeatureTensor::new(1, 3, 4, 4, l1).unwrap(),
                FeatureTensor::new(2, 2, 2, 2, l2).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn sampled_tiled_payload_recovers_patch_vectors() {
        let stack = two_layer_stack();
        let grid = build_patch_grid(&stack).unwrap();
        let set = rs_encode(&grid, 0.5, 4).unwrap();
        let coords: Vec<_> = set.patches.iter().map(|p| (p.row, p.col)).collect();
        let codec = LosslessPlaneCodec;
        let payload =
            tiled_features_payload(&stack, Some(&coords), 80, &codec, RangeMode::PerTensor).unwrap();
        let bytes = payload.to_bytes();
        let back = Payload::from_bytes(&bytes).unwrap();
        let decoded = tiled_features_decode(&back, &CodecRegistry::default()).unwrap();
        assert_eq!(decoded.len(), set.len());
        assert_eq!(decoded.dim, 5);
        for (a, b) in decoded.patches.iter().zip(&set.patches) {
            assert_eq!((a.row, a.col), (b.row, b.col));
            for (x, y) in a.vector.iter().zip(&b.vector) {
                // per-layer ranges are at most 2 wide here
                assert!((x - y).abs() <= 7.0 / 510.0 + 1e-6, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn full_tiled_payload_covers_every_cell() {
        let stack = two_layer_stack();
        let codec = LosslessPlaneCodec;
        let payload =
            tiled_features_payload(&stack, None, 80, &codec, RangeMode::PerChannel).unwrap();
        let decoded = tiled_features_decode(&payload, &CodecRegistry::default()).unwrap();
        assert_eq!(decoded.len(), 16);
    }
}
