//! Uncompressed 8-bit raster file used for resized images and masks.
//!
//! `"VIMG" | version u8 | H u16 | W u16 | channels u8 | H*W*channels bytes`,
//! interleaved row-major.

use std::path::Path;

use super::{read_file, write_file, DataError};
use crate::codecs::{LosslessPlaneCodec, PlaneCodec};
use crate::model::{Mask, Raster};
use crate::wire::{ByteReader, ByteWriter, FormatError};

pub const RASTER_MAGIC: &[u8; 4] = b"VIMG";
pub const RASTER_VERSION: u8 = 1;

pub fn raster_to_bytes(raster: &Raster) -> Result<Vec<u8>, FormatError> {
    let side = |field, v: usize| {
        u16::try_from(v).map_err(|_| FormatError::InvalidField {
            field,
            detail: format!("{v} exceeds u16"),
        })
    };
    let mut w = ByteWriter::with_capacity(10 + raster.data.len());
    w.bytes(RASTER_MAGIC);
    w.u8(RASTER_VERSION);
    w.u16(side("height", raster.height)?);
    w.u16(side("width", raster.width)?);
    w.u8(u8::try_from(raster.channels).map_err(|_| FormatError::InvalidField {
        field: "channels",
        detail: raster.channels.to_string(),
    })?);
    w.bytes(&raster.data);
    Ok(w.into_inner())
}

pub fn raster_from_bytes(bytes: &[u8]) -> Result<Raster, FormatError> {
    let mut r = ByteReader::new(bytes);
    r.magic(RASTER_MAGIC)?;
    r.version(RASTER_VERSION)?;
    let h = r.u16()? as usize;
    let w = r.u16()? as usize;
    let c = r.u8()? as usize;
    if r.remaining() != h * w * c {
        return Err(FormatError::SizeMismatch(format!(
            "{h}x{w}x{c} raster with {} pixel bytes",
            r.remaining()
        )));
    }
    let data = r.take(h * w * c)?.to_vec();
    Raster::new(h, w, c, data).map_err(|e| FormatError::InvalidField {
        field: "raster",
        detail: e.to_string(),
    })
}

/// Reads a `.vimg` raster, or a `.png` through the lossless plane codec.
pub fn read_raster(path: &Path) -> Result<Raster, DataError> {
    let bytes = read_file(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        return LosslessPlaneCodec
            .decode(&bytes)
            .map_err(|e| DataError::Layout(format!("{}: {e}", path.display())));
    }
    raster_from_bytes(&bytes).map_err(|e| DataError::format(path, e))
}

pub fn write_raster(path: &Path, raster: &Raster) -> Result<(), DataError> {
    let bytes = raster_to_bytes(raster).map_err(|e| DataError::format(path, e))?;
    write_file(path, &bytes)
}

/// Reads a single-channel raster as a binary mask.
pub fn read_mask(path: &Path) -> Result<Mask, DataError> {
    let r = read_raster(path)?;
    if r.channels != 1 {
        return Err(DataError::Layout(format!(
            "{}: mask has {} channels, expected 1",
            path.display(),
            r.channels
        )));
    }
    Ok(Mask::new(r.height, r.width, r.data)?)
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<(), DataError> {
    let data = mask.data.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
    write_raster(path, &Raster::new(mask.height, mask.width, 1, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let r = Raster::new(2, 3, 3, (0..18).collect()).unwrap();
        let b = raster_to_bytes(&r).unwrap();
        assert_eq!(b.len(), 10 + 18);
        assert_eq!(raster_from_bytes(&b).unwrap(), r);
        assert!(matches!(raster_from_bytes(&b[..7]), Err(FormatError::Truncated { .. })));
        assert!(matches!(
            raster_from_bytes(&b[..b.len() - 1]),
            Err(FormatError::SizeMismatch(_))
        ));
        let mut v = b.clone();
        v[4] = 2;
        assert!(matches!(
            raster_from_bytes(&v),
            Err(FormatError::UnsupportedVersion { .. })
        ));
    }
}
