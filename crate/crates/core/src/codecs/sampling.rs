//! Raw patch-feature transmission and its randomly sampled variant.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{grid_side, CodecError, Payload, PayloadKind};
use crate::model::{PatchFeature, PatchGrid};
use crate::scalar::{ceil_count, Scalar};
use crate::wire::{ByteReader, ByteWriter};

/// Patches kept by random sampling, with their grid coordinates, in row-major
/// order of the source grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPatchSet<T> {
    pub source_rows: usize,
    pub source_cols: usize,
    pub dim: usize,
    pub patches: Vec<PatchFeature<T>>,
}

impl<T: Scalar> SampledPatchSet<T> {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn source_cells(&self) -> usize {
        self.source_rows * self.source_cols
    }
}

/// Keeps `ceil(alpha * N)` distinct locations of a full grid, drawn uniformly
/// without replacement from a ChaCha8 stream seeded with `seed`.
pub fn rs_encode<T: Scalar>(
    grid: &PatchGrid<T>,
    alpha: f64,
    seed: u64,
) -> Result<SampledPatchSet<T>, CodecError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CodecError::InvalidParameter(format!(
            "sampling ratio {alpha} outside (0, 1]"
        )));
    }
    if !grid.is_full() {
        return Err(CodecError::InvalidParameter(
            "random sampling needs a full patch grid".into(),
        ));
    }
    let n = grid.cells();
    let keep = ceil_count(alpha, n).min(n);
    let mut chosen: Vec<usize> = if keep == n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index::sample(&mut rng, n, keep).into_vec()
    };
    chosen.sort_unstable();
    let patches = chosen
        .into_iter()
        .map(|i| grid.patches()[i].clone())
        .collect();
    Ok(SampledPatchSet {
        source_rows: grid.rows(),
        source_cols: grid.cols(),
        dim: grid.dim(),
        patches,
    })
}

/// `sampled_features` payload.
///
/// meta: `rows u16 | cols u16 | d u32 | count u32`;
/// body: per patch `row u16 | col u16 | d x f32`.
pub fn rs_payload(set: &SampledPatchSet<f32>) -> Result<Payload, CodecError> {
    if set.is_empty() {
        return Err(CodecError::Empty("sampled patch set"));
    }
    let mut meta = ByteWriter::with_capacity(12);
    meta.u16(grid_side(set.source_rows, "grid rows")?);
    meta.u16(grid_side(set.source_cols, "grid cols")?);
    meta.u32(set.dim as u32);
    meta.u32(set.patches.len() as u32);
    let mut body = ByteWriter::with_capacity(set.patches.len() * (4 + 4 * set.dim));
    for p in &set.patches {
        body.u16(p.row as u16);
        body.u16(p.col as u16);
        body.f32_slice(&p.vector);
    }
    Ok(Payload::new(
        PayloadKind::SampledFeatures,
        meta.into_inner(),
        body.into_inner(),
    ))
}

/// Parses a `sampled_features` payload back into the sparse set. No attempt
/// is made to fill the unsampled cells.
pub fn rs_decode_set(payload: &Payload) -> Result<SampledPatchSet<f32>, CodecError> {
    payload.expect_kind(PayloadKind::SampledFeatures)?;
    let mut meta = ByteReader::new(payload.meta());
    let rows = meta.u16()? as usize;
    let cols = meta.u16()? as usize;
    let dim = meta.u32()? as usize;
    let count = meta.u32()? as usize;
    meta.finish()?;
    let mut body = ByteReader::new(payload.body());
    let patches = read_coordinate_vectors(&mut body, count, dim, rows, cols)?;
    body.finish()?;
    Ok(SampledPatchSet {
        source_rows: rows,
        source_cols: cols,
        dim,
        patches,
    })
}

fn read_coordinate_vectors(
    body: &mut ByteReader<'_>,
    count: usize,
    dim: usize,
    rows: usize,
    cols: usize,
) -> Result<Vec<PatchFeature<f32>>, CodecError> {
    let mut patches = Vec::with_capacity(count);
    for _ in 0..count {
        let row = body.u16()? as usize;
        let col = body.u16()? as usize;
        if row >= rows || col >= cols {
            return Err(CodecError::Dimension(format!(
                "patch ({row}, {col}) outside {rows}x{cols} grid"
            )));
        }
        let vector = body.f32_vec(dim)?;
        patches.push(PatchFeature { row, col, vector });
    }
    Ok(patches)
}

/// `raw_features` payload of a full grid.
///
/// meta: `rows u16 | cols u16 | d u32`; body: `rows*cols*d` f32, row-major
/// over locations.
pub fn raw_features_payload(grid: &PatchGrid<f32>) -> Result<Payload, CodecError> {
    if !grid.is_full() {
        return Err(CodecError::InvalidParameter(
            "raw feature transmission needs a full grid".into(),
        ));
    }
    let mut meta = ByteWriter::with_capacity(8);
    meta.u16(grid_side(grid.rows(), "grid rows")?);
    meta.u16(grid_side(grid.cols(), "grid cols")?);
    meta.u32(grid.dim() as u32);
    let mut body = ByteWriter::with_capacity(grid.cells() * grid.dim() * 4);
    for p in grid.patches() {
        body.f32_slice(&p.vector);
    }
    Ok(Payload::new(
        PayloadKind::RawFeatures,
        meta.into_inner(),
        body.into_inner(),
    ))
}

pub fn raw_features_decode(payload: &Payload) -> Result<PatchGrid<f32>, CodecError> {
    payload.expect_kind(PayloadKind::RawFeatures)?;
    let mut meta = ByteReader::new(payload.meta());
    let rows = meta.u16()? as usize;
    let cols = meta.u16()? as usize;
    let dim = meta.u32()? as usize;
    meta.finish()?;
    let mut body = ByteReader::new(payload.body());
    let data = body.f32_vec(rows * cols * dim)?;
    body.finish()?;
    Ok(PatchGrid::from_rows(rows, cols, dim, &data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codecs::PAYLOAD_FRAMING;

    fn grid(rows: usize, cols: usize, dim: usize) -> PatchGrid<f32> {
        let data: Vec<f32> = (0..rows * cols * dim).map(|i| i as f32 * 0.5).collect();
        PatchGrid::from_rows(rows, cols, dim, &data).unwrap()
    }

    #[test]
    fn alpha_one_keeps_everything_in_grid_order() {
        let g = grid(4, 4, 3);
        for seed in [0, 1, 99] {
            let s = rs_encode(&g, 1.0, seed).unwrap();
            assert_eq!(s.patches, g.patches());
        }
    }

    #[test]
    fn quarter_sampling_keeps_four_of_sixteen() {
        let g = grid(4, 4, 2);
        let s = rs_encode(&g, 0.25, 5).unwrap();
        assert_eq!(s.len(), 4);
        let mut coords: Vec<_> = s.patches.iter().map(|p| (p.row, p.col)).collect();
        coords.dedup();
        assert_eq!(coords.len(), 4);
    }

    #[test]
    fn same_seed_same_selection() {
        let g = grid(10, 10, 1);
        let a = rs_encode(&g, 0.37, 11).unwrap();
        let b = rs_encode(&g, 0.37, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 37);
    }

    #[test]
    fn alpha_out_of_range_is_rejected() {
        let g = grid(2, 2, 1);
        for alpha in [0.0, -0.1, 1.01, f64::NAN] {
            assert!(matches!(
                rs_encode(&g, alpha, 0),
                Err(CodecError::InvalidParameter(_))
            ));
        }
    }

    #[test]
    fn sampled_payload_byte_count() {
        let g = grid(4, 4, 5);
        let s = rs_encode(&g, 0.25, 3).unwrap();
        let p = rs_payload(&s).unwrap();
        // framing + meta(2+2+4+4) + 4 * (2*2 + 5*4)
        assert_eq!(p.size_bytes(), PAYLOAD_FRAMING + 12 + 4 * (2 * 2 + 5 * 4));
        assert_eq!(p.to_bytes().len(), p.size_bytes());
        assert_eq!(rs_decode_set(&p).unwrap(), s);
    }

    #[test]
    fn empty_set_has_no_payload() {
        let s = SampledPatchSet::<f32> {
            source_rows: 2,
            source_cols: 2,
            dim: 1,
            patches: vec![],
        };
        assert!(matches!(rs_payload(&s), Err(CodecError::Empty(_))));
    }

    #[test]
    fn full_sample_costs_only_coordinates_over_raw() {
        let g = grid(6, 5, 7);
        let raw = raw_features_payload(&g).unwrap();
        let all = rs_payload(&rs_encode(&g, 1.0, 0).unwrap()).unwrap();
        let coordinate_overhead = 4 * g.cells() + 4; // coords + count field
        assert!(all.size_bytes() >= raw.size_bytes());
        assert_eq!(all.size_bytes() - raw.size_bytes(), coordinate_overhead);
        assert_eq!(raw_features_decode(&raw).unwrap(), g);
    }
}
