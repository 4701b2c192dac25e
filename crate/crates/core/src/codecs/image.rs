//! Pluggable still-image codec slot and the image payload kinds.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{
    grid_side, BlockDctCodec, CodecError, LosslessPlaneCodec, Payload, PayloadKind,
};
use crate::model::Raster;
use crate::wire::{ByteReader, ByteWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecConcurrency {
    /// Independent calls may run on different threads at once.
    Concurrent,
    /// Calls must not overlap; the pipeline runs images one at a time.
    Serialized,
}

/// An 8-bit still-image codec for 1- or 3-channel rasters.
///
/// Encoded bytes must be self-describing: `decode` receives nothing but what
/// `encode` returned.
pub trait PlaneCodec: Send + Sync {
    /// Wire id written into payload headers. 0 and 1 are taken by the
    /// built-in codecs.
    fn id(&self) -> u8;

    fn name(&self) -> &str;

    fn is_lossless(&self) -> bool;

    fn concurrency(&self) -> CodecConcurrency {
        CodecConcurrency::Concurrent
    }

    /// `quality` is in 0..=100; lossless codecs may ignore it.
    fn encode(&self, raster: &Raster, quality: u8) -> Result<Vec<u8>, CodecError>;

    fn decode(&self, bytes: &[u8]) -> Result<Raster, CodecError>;
}

/// Codecs known to the server, keyed by wire id.
#[derive(Clone)]
pub struct CodecRegistry {
    codecs: BTreeMap<u8, Arc<dyn PlaneCodec>>,
}

impl fmt::Debug for CodecRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.codecs.iter().map(|(id, c)| (id, c.name())))
            .finish()
    }
}

impl Default for CodecRegistry {
    fn default() -> Self {
        let mut registry = Self {
            codecs: BTreeMap::new(),
        };
        registry.register(Arc::new(LosslessPlaneCodec::default()));
        registry.register(Arc::new(BlockDctCodec));
        registry
    }
}

impl CodecRegistry {
    /// Adds or replaces the codec under its id.
    pub fn register(&mut self, codec: Arc<dyn PlaneCodec>) {
        self.codecs.insert(codec.id(), codec);
    }

    pub fn get(&self, id: u8) -> Result<Arc<dyn PlaneCodec>, CodecError> {
        self.codecs.get(&id).cloned().ok_or(CodecError::UnknownCodec(id))
    }
}

/// Uncompressed `raw_image` payload.
///
/// meta: `H u16 | W u16 | channels u8`; body: interleaved pixels.
pub fn raw_image_payload(raster: &Raster) -> Result<Payload, CodecError> {
    let mut meta = ByteWriter::with_capacity(5);
    meta.u16(grid_side(raster.height, "image height")?);
    meta.u16(grid_side(raster.width, "image width")?);
    meta.u8(raster.channels as u8);
    Ok(Payload::new(
        PayloadKind::RawImage,
        meta.into_inner(),
        raster.data.clone(),
    ))
}

pub fn decode_raw_image(payload: &Payload) -> Result<Raster, CodecError> {
    payload.expect_kind(PayloadKind::RawImage)?;
    let mut meta = ByteReader::new(payload.meta());
    let h = meta.u16()? as usize;
    let w = meta.u16()? as usize;
    let c = meta.u8()? as usize;
    meta.finish()?;
    Ok(Raster::new(h, w, c, payload.body().to_vec())?)
}

/// Compresses an image or 8-bit plane with `codec` into a
/// `compressed_image` payload.
///
/// meta: `codec id u8 | quality u8 | H u16 | W u16 | channels u8`;
/// body: codec bytes.
pub fn image_encode(
    raster: &Raster,
    quality: u8,
    codec: &dyn PlaneCodec,
) -> Result<Payload, CodecError> {
    if quality > 100 {
        return Err(CodecError::InvalidParameter(format!(
            "quality {quality} outside 0..=100"
        )));
    }
    if raster.channels != 1 && raster.channels != 3 {
        return Err(CodecError::InvalidParameter(format!(
            "{} channels; only 1 or 3 are supported",
            raster.channels
        )));
    }
    let body = codec.encode(raster, quality)?;
    let mut meta = ByteWriter::with_capacity(7);
    meta.u8(codec.id());
    meta.u8(quality);
    meta.u16(grid_side(raster.height, "image height")?);
    meta.u16(grid_side(raster.width, "image width")?);
    meta.u8(raster.channels as u8);
    Ok(Payload::new(
        PayloadKind::CompressedImage,
        meta.into_inner(),
        body,
    ))
}

/// Inverse of [`image_encode`]; the codec is looked up by the id in the header.
pub fn image_decode(payload: &Payload, registry: &CodecRegistry) -> Result<Raster, CodecError> {
    payload.expect_kind(PayloadKind::CompressedImage)?;
    let mut meta = ByteReader::new(payload.meta());
    let codec_id = meta.u8()?;
    let _quality = meta.u8()?;
    let h = meta.u16()? as usize;
    let w = meta.u16()? as usize;
    let c = meta.u8()? as usize;
    meta.finish()?;
    let raster = registry.get(codec_id)?.decode(payload.body())?;
    if (raster.height, raster.width, raster.channels) != (h, w, c) {
        return Err(CodecError::Dimension(format!(
            "codec produced {}x{}x{}, header says {h}x{w}x{c}",
            raster.height, raster.width, raster.channels
        )));
    }
    Ok(raster)
}
