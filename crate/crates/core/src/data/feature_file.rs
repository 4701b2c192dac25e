//! Per-image activation file shared with the offline exporter.
//!
//! ```text
//! "VFTR" | version u8 | id_len u16 | id | category_len u16 | category |
//! label u8 | layer_count u8 | layer_count x (layer u8, C u16, H u16, W u16) |
//! mask_ref_len u16 | mask_ref | per-layer f32 values, channel-major
//! ```

use std::path::Path;

use super::{read_file, write_file, DataError};
use crate::model::{FeatureStack, FeatureTensor, Label};
use crate::wire::{ByteReader, ByteWriter, FormatError};

pub const FEATURE_MAGIC: &[u8; 4] = b"VFTR";
pub const FEATURE_VERSION: u8 = 1;

/// A feature stack plus the dataset-relative path of its ground-truth mask
/// (empty when there is none). The stack's in-memory `mask` is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub stack: FeatureStack<f32>,
    pub mask_ref: String,
}

impl FeatureFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>, FormatError> {
        let layers = self.stack.layers();
        if layers.len() > u8::MAX as usize {
            return Err(FormatError::InvalidField {
                field: "layer count",
                detail: layers.len().to_string(),
            });
        }
        let mut w = ByteWriter::with_capacity(64 + 4 * self.stack.embedding_len());
        w.bytes(FEATURE_MAGIC);
        w.u8(FEATURE_VERSION);
        w.short_str("image id", &self.stack.image_id)?;
        w.short_str("category", &self.stack.category)?;
        w.u8(self.stack.label.to_byte());
        w.u8(layers.len() as u8);
        for t in layers {
            w.u8(t.layer());
            for (field, v) in [("C", t.channels()), ("H", t.height()), ("W", t.width())] {
                let v = u16::try_from(v).map_err(|_| FormatError::InvalidField {
                    field,
                    detail: format!("{v} exceeds u16"),
                })?;
                w.u16(v);
            }
        }
        w.short_str("mask reference", &self.mask_ref)?;
        for t in layers {
            w.f32_slice(t.values());
        }
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = ByteReader::new(bytes);
        r.magic(FEATURE_MAGIC)?;
        r.version(FEATURE_VERSION)?;
        let image_id = r.short_str("image id")?;
        let category = r.short_str("category")?;
        let label_byte = r.u8()?;
        let label = Label::from_byte(label_byte).ok_or_else(|| FormatError::InvalidField {
            field: "label",
            detail: label_byte.to_string(),
        })?;
        let count = r.u8()? as usize;
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let layer = r.u8()?;
            let (c, h, w) = (r.u16()? as usize, r.u16()? as usize, r.u16()? as usize);
            shapes.push((layer, c, h, w));
        }
        let mask_ref = r.short_str("mask reference")?;
        let declared: usize = shapes.iter().map(|&(_, c, h, w)| c * h * w * 4).sum();
        if r.remaining() != declared {
            return Err(FormatError::SizeMismatch(format!(
                "header declares {declared} value bytes, {} present",
                r.remaining()
            )));
        }
        let mut layers = Vec::with_capacity(count);
        for (layer, c, h, w) in shapes {
            let values = r.f32_vec(c * h * w)?;
            let t = FeatureTensor::new(layer, c, h, w, values).map_err(|e| FormatError::InvalidField {
                field: "layer",
                detail: e.to_string(),
            })?;
            layers.push(t);
        }
        r.finish()?;
        let stack = FeatureStack::new(image_id, category, label, None, layers).map_err(|e| {
            FormatError::InvalidField {
                field: "layers",
                detail: e.to_string(),
            }
        })?;
        Ok(Self { stack, mask_ref })
    }
}

pub fn write_feature_file(path: &Path, file: &FeatureFile) -> Result<(), DataError> {
    let bytes = file.to_bytes().map_err(|e| DataError::format(path, e))?;
    write_file(path, &bytes)
}

pub fn read_feature_file(path: &Path) -> Result<FeatureFile, DataError> {
    let bytes = read_file(path)?;
    FeatureFile::from_bytes(&bytes).map_err(|e| DataError::format(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stack(shapes: &[(u8, usize, usize, usize)], fill: impl Fn(usize) -> f32) -> FeatureStack<f32> {
        let mut k = 0;
        let layers = shapes
            .iter()
            .map(|&(l, c, h, w)| {
                let values = (0..c * h * w)
                    .map(|_| {
                        k += 1;
                        fill(k)
                    })
                    .collect();
                FeatureTensor::new(l, c, h, w, values).unwrap()
            })
            .collect();
        FeatureStack::new("img-07", "bottle", Label::Anomalous, None, layers).unwrap()
    }

    #[test]
    fn exact_byte_layout() {
        let f = FeatureFile {
            stack: stack(&[(1, 1, 1, 2)], |k| k as f32),
            mask_ref: "m".into(),
        };
        let b = f.to_bytes().unwrap();
        let mut want = b"VFTR\x01".to_vec();
        want.extend_from_slice(&[6, 0]);
        want.extend_from_slice(b"img-07");
        want.extend_from_slice(&[6, 0]);
        want.extend_from_slice(b"bottle");
        want.extend_from_slice(&[1, 1, 1, 1, 0, 1, 0, 2, 0, 1, 0, b'm']);
        want.extend_from_slice(&1f32.to_le_bytes());
        want.extend_from_slice(&2f32.to_le_bytes());
        assert_eq!(b, want);
    }

    #[test]
    fn corruption_classes_are_distinct() {
        let f = FeatureFile {
            stack: stack(&[(1, 2, 2, 2), (3, 1, 1, 1)], |k| k as f32 * 0.5),
            mask_ref: String::new(),
        };
        let good = f.to_bytes().unwrap();
        assert_eq!(FeatureFile::from_bytes(&good).unwrap(), f);

        let mut bad = good.clone();
        bad[0] = b'W';
        assert!(matches!(FeatureFile::from_bytes(&bad), Err(FormatError::BadMagic { .. })));
        bad = good.clone();
        bad[4] = FEATURE_VERSION + 1;
        assert!(matches!(
            FeatureFile::from_bytes(&bad),
            Err(FormatError::UnsupportedVersion { .. })
        ));
        assert!(matches!(
            FeatureFile::from_bytes(&good[..20]),
            Err(FormatError::Truncated { .. })
        ));
        assert!(matches!(
            FeatureFile::from_bytes(&good[..good.len() - 4]),
            Err(FormatError::SizeMismatch(_))
        ));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(FeatureFile::from_bytes(&long), Err(FormatError::SizeMismatch(_))));
    }

    proptest! {
        #[test]
        fn random_stacks_round_trip_bit_exactly(
            shapes in prop::collection::vec((1usize..5, 1usize..5, 1usize..5), 1..4),
            bits in any::<u32>(),
        ) {
            let shapes: Vec<_> = shapes
                .iter()
                .enumerate()
                .map(|(i, &(c, h, w))| (i as u8 + 1, c, h, w))
                .collect();
            let s = stack(&shapes, |k| {
                let v = f32::from_bits(bits.wrapping_mul(k as u32 + 1));
                if v.is_finite() { v } else { k as f32 }
            });
            let f = FeatureFile { stack: s, mask_ref: "a/b_mask.vimg".into() };
            let b = f.to_bytes().unwrap();
            let back = FeatureFile::from_bytes(&b).unwrap();
            prop_assert_eq!(back.to_bytes().unwrap(), b);
            prop_assert_eq!(back, f);
        }
    }
}
