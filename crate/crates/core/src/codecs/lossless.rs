//! Reference lossless plane codec: per-row predictive filtering followed by
//! deflate, i.e. an 8-bit PNG stream.

use std::io::Cursor;

use super::{CodecError, PlaneCodec, LOSSLESS_CODEC_ID};
use crate::model::Raster;

#[derive(Debug, Clone, Copy, Default)]
pub struct LosslessPlaneCodec;

impl PlaneCodec for LosslessPlaneCodec {
    fn id(&self) -> u8 {
        LOSSLESS_CODEC_ID
    }

    fn name(&self) -> &str {
        "lossless-png"
    }

    fn is_lossless(&self) -> bool {
        true
    }

    fn encode(&self, raster: &Raster, _quality: u8) -> Result<Vec<u8>, CodecError> {
        let color = match raster.channels {
            1 => png::ColorType::Grayscale,
            3 => png::ColorType::Rgb,
            c => {
                return Err(CodecError::InvalidParameter(format!(
                    "{c} channels not supported by the lossless codec"
                )))
            }
        };
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, raster.width as u32, raster.height as u32);
            encoder.set_color(color);
            encoder.set_depth(png::BitDepth::Eight);
            encoder.set_compression(png::Compression::High);
            encoder.set_filter(png::Filter::Adaptive);
            let mut writer = encoder
                .write_header()
                .map_err(|e| CodecError::Encode(e.to_string()))?;
            writer
                .write_image_data(&raster.data)
                .map_err(|e| CodecError::Encode(e.to_string()))?;
            writer.finish().map_err(|e| CodecError::Encode(e.to_string()))?;
        }
        Ok(out)
    }

    fn decode(&self, bytes: &[u8]) -> Result<Raster, CodecError> {
        let mut decoder = png::Decoder::new(Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::IDENTITY);
        let mut reader = decoder
            .read_info()
            .map_err(|e| CodecError::Decode(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| CodecError::Decode("image too large".into()))?;
        let mut buf = vec![0u8; size];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| CodecError::Decode(e.to_string()))?;
        let channels = match (info.color_type, info.bit_depth) {
            (png::ColorType::Grayscale, png::BitDepth::Eight) => 1,
            (png::ColorType::Rgb, png::BitDepth::Eight) => 3,
            other => {
                return Err(CodecError::Decode(format!("unexpected PNG layout {other:?}")))
            }
        };
        buf.truncate(info.buffer_size());
        Ok(Raster::new(
            info.height as usize,
            info.width as usize,
            channels,
            buf,
        )?)
    }
}
