//! Edge-side encoders and server-side decoders for every transmission
//! strategy except product quantization (see [`crate::pq`]).
//!
//! Everything that crosses the edge/server boundary is a [`Payload`]. Its wire
//! layout is
//!
//! ```text
//! "VPLD" | version u8 | kind u8 | meta_len u32 | meta | body_len u32 | body
//! ```
//!
//! with all integers little-endian. The kind-specific `meta` layouts are
//! documented on the encoder that produces each kind.

mod dct;
mod image;
mod lossless;
mod sampling;
mod tiling;

use thiserror::Error;

use crate::model::ModelError;
use crate::wire::{ByteReader, ByteWriter, FormatError};

pub use self::dct::BlockDctCodec;
pub use self::image::{
    decode_raw_image, image_decode, image_encode, raw_image_payload, CodecConcurrency,
    CodecRegistry, PlaneCodec,
};
pub use self::lossless::LosslessPlaneCodec;
pub use self::sampling::{
    raw_features_decode, raw_features_payload, rs_decode_set, rs_encode, rs_payload,
    SampledPatchSet,
};
pub use self::tiling::{
    tile_pack, tile_pack_with, tile_unpack, tiled_features_decode, tiled_features_payload,
    RangeMode, TilePlan,
};

pub const PAYLOAD_MAGIC: &[u8; 4] = b"VPLD";
pub const PAYLOAD_VERSION: u8 = 1;
/// Bytes of framing around meta and body: magic, version, kind, two lengths.
pub const PAYLOAD_FRAMING: usize = 4 + 1 + 1 + 4 + 4;

/// Codec id of the built-in lossless plane codec.
pub const LOSSLESS_CODEC_ID: u8 = 0;
/// Codec id of the built-in block-DCT lossy codec.
pub const BLOCK_DCT_CODEC_ID: u8 = 1;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("payload kind {found:?} where {expected} was expected")]
    WrongKind {
        expected: &'static str,
        found: PayloadKind,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no codec registered under id {0}")]
    UnknownCodec(u8),
    #[error("encode failed: {0}")]
    Encode(String),
    #[error("decode failed: {0}")]
    Decode(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum PayloadKind {
    RawImage = 0,
    CompressedImage = 1,
    RawFeatures = 2,
    SampledFeatures = 3,
    PqCodes = 4,
    TiledFeatures = 5,
}

impl PayloadKind {
    pub fn from_byte(byte: u8) -> Option<Self> {
        Some(match byte {
            0 => Self::RawImage,
            1 => Self::CompressedImage,
            2 => Self::RawFeatures,
            3 => Self::SampledFeatures,
            4 => Self::PqCodes,
            5 => Self::TiledFeatures,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::RawImage => "raw_image",
            Self::CompressedImage => "compressed_image",
            Self::RawFeatures => "raw_features",
            Self::SampledFeatures => "sampled_features",
            Self::PqCodes => "pq_codes",
            Self::TiledFeatures => "tiled_features",
        }
    }
}

/// The exact byte sequence sent from edge to server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    kind: PayloadKind,
    meta: Vec<u8>,
    body: Vec<u8>,
}

impl Payload {
    pub fn new(kind: PayloadKind, meta: Vec<u8>, body: Vec<u8>) -> Self {
        Self { kind, meta, body }
    }

    pub fn kind(&self) -> PayloadKind {
        self.kind
    }

    pub fn meta(&self) -> &[u8] {
        &self.meta
    }

    pub fn body(&self) -> &[u8] {
        &self.body
    }

    /// Length of the serialized payload, framing included.
    pub fn size_bytes(&self) -> usize {
        PAYLOAD_FRAMING + self.meta.len() + self.body.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_capacity(self.size_bytes());
        w.bytes(PAYLOAD_MAGIC);
        w.u8(PAYLOAD_VERSION);
        w.u8(self.kind as u8);
        w.u32(self.meta.len() as u32);
        w.bytes(&self.meta);
        w.u32(self.body.len() as u32);
        w.bytes(&self.body);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = ByteReader::new(bytes);
        r.magic(PAYLOAD_MAGIC)?;
        r.version(PAYLOAD_VERSION)?;
        let kind_byte = r.u8()?;
        let kind = PayloadKind::from_byte(kind_byte).ok_or_else(|| FormatError::InvalidField {
            field: "payload kind",
            detail: kind_byte.to_string(),
        })?;
        let meta_len = r.u32()? as usize;
        let meta = r.take(meta_len)?.to_vec();
        let body_len = r.u32()? as usize;
        let body = r.take(body_len)?.to_vec();
        r.finish()?;
        Ok(Self { kind, meta, body })
    }

    pub(crate) fn expect_kind(&self, expected: PayloadKind) -> Result<(), CodecError> {
        if self.kind != expected {
            return Err(CodecError::WrongKind {
                expected: expected.name(),
                found: self.kind,
            });
        }
        Ok(())
    }
}

/// Size of one payload in bytes, as charged against the communication budget.
pub fn measure_payload(payload: &Payload) -> u64 {
    payload.size_bytes() as u64
}

/// Total size of a batch of payloads; an empty batch costs nothing.
pub fn measure_payloads(payloads: &[Payload]) -> u64 {
    payloads.iter().map(measure_payload).sum()
}

pub(crate) fn grid_side(value: usize, what: &'static str) -> Result<u16, CodecError> {
    u16::try_from(value).map_err(|_| {
        CodecError::InvalidParameter(format!("{what} {value} exceeds the 16-bit coordinate range"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_round_trip_and_size() {
        let p = Payload::new(PayloadKind::SampledFeatures, vec![1, 2, 3], vec![9; 10]);
        let bytes = p.to_bytes();
        assert_eq!(bytes.len(), p.size_bytes());
        assert_eq!(&bytes[..4], b"VPLD");
        assert_eq!(Payload::from_bytes(&bytes).unwrap(), p);
        assert_eq!(measure_payload(&p), 27);
    }

    #[test]
    fn empty_batch_measures_zero() {
        assert_eq!(measure_payloads(&[]), 0);
    }

    #[test]
    fn corruption_classes_are_distinct() {
        let p = Payload::new(PayloadKind::RawImage, vec![0; 5], vec![7; 12]);
        let good = p.to_bytes();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(Payload::from_bytes(&bad_magic), Err(FormatError::BadMagic { .. })));

        let mut bad_version = good.clone();
        bad_version[4] = PAYLOAD_VERSION + 1;
        assert!(matches!(
            Payload::from_bytes(&bad_version),
            Err(FormatError::UnsupportedVersion { .. })
        ));

        assert!(matches!(
            Payload::from_bytes(&good[..good.len() - 1]),
            Err(FormatError::Truncated { .. })
        ));

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(Payload::from_bytes(&trailing), Err(FormatError::SizeMismatch(_))));

        let mut bad_kind = good;
        bad_kind[5] = 42;
        assert!(matches!(
            Payload::from_bytes(&bad_kind),
            Err(FormatError::InvalidField { .. })
        ));
    }
}
