//! Reference lossy codec: 8x8 block DCT with quality-scaled quantization
//! tables, coefficients deflated in zigzag-major order.
//!
//! Stream layout: `"BDCT" | H u16 | W u16 | channels u8 | quality u8 |` zlib
//! stream of signed LEB128 varints. Three-channel input is coded as YCbCr
//! with the chroma table on Cb/Cr. Coefficients are grouped by zigzag
//! position across all blocks (all DC terms first, delta coded), which puts
//! the long runs of zeroed high-frequency terms next to each other.

use std::io::{Read, Write};
use std::sync::OnceLock;

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;

use super::{CodecError, PlaneCodec, BLOCK_DCT_CODEC_ID};
use crate::model::Raster;
use crate::wire::{ByteReader, ByteWriter};

const MAGIC: &[u8; 4] = b"BDCT";
const BLOCK: usize = 8;

/// Base luminance quantization table (row-major).
const LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

const CHROMA_TABLE: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

#[derive(Debug, Clone, Copy, Default)]
pub struct BlockDctCodec;

fn quant_table(quality: u8, chroma: bool) -> [f32; 64] {
    let q = quality.clamp(1, 100) as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let base_table = if chroma { &CHROMA_TABLE } else { &LUMA_TABLE };
    let mut table = [1.0f32; 64];
    for (t, &base) in table.iter_mut().zip(base_table.iter()) {
        let v = (base as u32 * scale + 50) / 100;
        *t = v.clamp(1, 255) as f32;
    }
    table
}

/// `cos((2x + 1) u pi / 16)` scaled for an orthonormal DCT-II, indexed `[u][x]`.
fn basis() -> &'static [[f32; BLOCK]; BLOCK] {
    static BASIS: OnceLock<[[f32; BLOCK]; BLOCK]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0f32; BLOCK]; BLOCK];
        for (u, row) in b.iter_mut().enumerate() {
            let norm = if u == 0 {
                (1.0 / BLOCK as f64).sqrt()
            } else {
                (2.0 / BLOCK as f64).sqrt()
            };
            for (x, v) in row.iter_mut().enumerate() {
                let angle = (2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0;
                *v = (norm * angle.cos()) as f32;
            }
        }
        b
    })
}

fn zigzag() -> &'static [usize; 64] {
    static ZIGZAG: OnceLock<[usize; 64]> = OnceLock::new();
    ZIGZAG.get_or_init(|| {
        let mut order = [0usize; 64];
        let mut i = 0;
        for s in 0..(2 * BLOCK - 1) {
            let cells: Vec<(usize, usize)> = (0..BLOCK)
                .filter_map(|r| s.checked_sub(r).filter(|&c| c < BLOCK).map(|c| (r, c)))
                .collect();
            let iter: Box<dyn Iterator<Item = &(usize, usize)>> = if s % 2 == 0 {
                Box::new(cells.iter().rev())
            } else {
                Box::new(cells.iter())
            };
            for &(r, c) in iter {
                order[i] = r * BLOCK + c;
                i += 1;
            }
        }
        order
    })
}

fn forward(block: &[f32; 64]) -> [f32; 64] {
    let b = basis();
    let mut tmp = [0.0f32; 64];
    // rows
    for y in 0..BLOCK {
        for u in 0..BLOCK {
            tmp[y * BLOCK + u] = (0..BLOCK).map(|x| b[u][x] * block[y * BLOCK + x]).sum();
        }
    }
    let mut out = [0.0f32; 64];
    // columns
    for v in 0..BLOCK {
        for u in 0..BLOCK {
            out[v * BLOCK + u] = (0..BLOCK).map(|y| b[v][y] * tmp[y * BLOCK + u]).sum();
        }
    }
    out
}

fn inverse(coef: &[f32; 64]) -> [f32; 64] {
    let b = basis();
    let mut tmp = [0.0f32; 64];
    for y in 0..BLOCK {
        for u in 0..BLOCK {
            tmp[y * BLOCK + u] = (0..BLOCK).map(|v| b[v][y] * coef[v * BLOCK + u]).sum();
        }
    }
    let mut out = [0.0f32; 64];
    for y in 0..BLOCK {
        for x in 0..BLOCK {
            out[y * BLOCK + x] = (0..BLOCK).map(|u| b[u][x] * tmp[y * BLOCK + u]).sum();
        }
    }
    out
}

fn blocks_along(len: usize) -> usize {
    len.div_ceil(BLOCK)
}

/// Level-shifted planes (`value - 128`), YCbCr for three channels.
fn to_planes(raster: &Raster) -> Vec<Vec<f32>> {
    let n = raster.height * raster.width;
    if raster.channels != 3 {
        return (0..raster.channels)
            .map(|k| (0..n).map(|i| raster.data[i * raster.channels + k] as f32 - 128.0).collect())
            .collect();
    }
    let mut planes = vec![Vec::with_capacity(n); 3];
    for px in raster.data.chunks_exact(3) {
        let (r, g, b) = (px[0] as f32, px[1] as f32, px[2] as f32);
        planes[0].push(0.299 * r + 0.587 * g + 0.114 * b - 128.0);
        planes[1].push(-0.168_736 * r - 0.331_264 * g + 0.5 * b);
        planes[2].push(0.5 * r - 0.418_688 * g - 0.081_312 * b);
    }
    planes
}

fn from_planes(planes: &[Vec<f32>], height: usize, width: usize) -> Raster {
    let channels = planes.len();
    let mut out = Raster::zeros(height, width, channels);
    let clamp = |v: f32| v.round().clamp(0.0, 255.0) as u8;
    for i in 0..height * width {
        if channels == 3 {
            let (y, cb, cr) = (planes[0][i] + 128.0, planes[1][i], planes[2][i]);
            out.data[i * 3] = clamp(y + 1.402 * cr);
            out.data[i * 3 + 1] = clamp(y - 0.344_136 * cb - 0.714_136 * cr);
            out.data[i * 3 + 2] = clamp(y + 1.772 * cb);
        } else {
            for (k, plane) in planes.iter().enumerate() {
                out.data[i * channels + k] = clamp(plane[i] + 128.0);
            }
        }
    }
    out
}

fn put_varint(out: &mut Vec<u8>, value: i32) {
    let mut v = ((value << 1) ^ (value >> 31)) as u32;
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn get_varint(data: &[u8], pos: &mut usize) -> Result<i32, CodecError> {
    let mut v = 0u32;
    for shift in (0..35).step_by(7) {
        let byte = *data
            .get(*pos)
            .ok_or_else(|| CodecError::Decode("coefficient stream ends early".into()))?;
        *pos += 1;
        v |= ((byte & 0x7f) as u32) << shift;
        if byte & 0x80 == 0 {
            return Ok(((v >> 1) as i32) ^ -((v & 1) as i32));
        }
    }
    Err(CodecError::Decode("overlong varint".into()))
}

impl PlaneCodec for BlockDctCodec {
    fn id(&self) -> u8 {
        BLOCK_DCT_CODEC_ID
    }

    fn name(&self) -> &str {
        "block-dct"
    }

    fn is_lossless(&self) -> bool {
        false
    }

    fn encode(&self, raster: &Raster, quality: u8) -> Result<Vec<u8>, CodecError> {
        if raster.height > u16::MAX as usize || raster.width > u16::MAX as usize {
            return Err(CodecError::InvalidParameter(
                "raster exceeds 65535 pixels per side".into(),
            ));
        }
        let (height, width) = (raster.height, raster.width);
        let (by, bx) = (blocks_along(height), blocks_along(width));
        let per_plane = by * bx;
        let n_blocks = per_plane * raster.channels;
        // coefficient-major: coeffs[pos * n_blocks + block]
        let mut coeffs = vec![0i32; 64 * n_blocks];
        let zz = zigzag();
        for (k, plane) in to_planes(raster).iter().enumerate() {
            let table = quant_table(quality, raster.channels == 3 && k > 0);
            for byi in 0..by {
                for bxi in 0..bx {
                    let mut block = [0.0f32; 64];
                    for y in 0..BLOCK {
                        let sy = (byi * BLOCK + y).min(height - 1);
                        for x in 0..BLOCK {
                            let sx = (bxi * BLOCK + x).min(width - 1);
                            block[y * BLOCK + x] = plane[sy * width + sx];
                        }
                    }
                    let freq = forward(&block);
                    let block_index = k * per_plane + byi * bx + bxi;
                    for (pos, &cell) in zz.iter().enumerate() {
                        coeffs[pos * n_blocks + block_index] = (freq[cell] / table[cell]).round() as i32;
                    }
                }
            }
        }
        let mut stream = Vec::with_capacity(coeffs.len());
        let mut previous_dc = 0;
        for (i, &c) in coeffs.iter().enumerate() {
            if i < n_blocks {
                put_varint(&mut stream, c - previous_dc);
                previous_dc = c;
            } else {
                put_varint(&mut stream, c);
            }
        }
        let mut enc = ZlibEncoder::new(Vec::new(), Compression::best());
        enc.write_all(&stream)
            .map_err(|e| CodecError::Encode(e.to_string()))?;
        let compressed = enc.finish().map_err(|e| CodecError::Encode(e.to_string()))?;
        let mut w = ByteWriter::with_capacity(10 + compressed.len());
        w.bytes(MAGIC);
        w.u16(height as u16);
        w.u16(width as u16);
        w.u8(raster.channels as u8);
        w.u8(quality);
        w.bytes(&compressed);
        Ok(w.into_inner())
    }

    fn decode(&self, bytes: &[u8]) -> Result<Raster, CodecError> {
        let mut r = ByteReader::new(bytes);
        r.magic(MAGIC)?;
        let height = r.u16()? as usize;
        let width = r.u16()? as usize;
        let channels = r.u8()? as usize;
        let quality = r.u8()?;
        if height == 0 || width == 0 || channels == 0 {
            return Err(CodecError::Decode("zero-sized raster".into()));
        }
        let rest = r.take(r.remaining())?;
        let (by, bx) = (blocks_along(height), blocks_along(width));
        let per_plane = by * bx;
        let n_blocks = per_plane * channels;
        let mut stream = Vec::new();
        ZlibDecoder::new(rest)
            .read_to_end(&mut stream)
            .map_err(|e| CodecError::Decode(e.to_string()))?;
        let mut coeffs = Vec::with_capacity(64 * n_blocks);
        let mut pos = 0;
        let mut previous_dc = 0;
        for i in 0..64 * n_blocks {
            let v = get_varint(&stream, &mut pos)?;
            if i < n_blocks {
                previous_dc += v;
                coeffs.push(previous_dc);
            } else {
                coeffs.push(v);
            }
        }
        if pos != stream.len() {
            return Err(CodecError::Decode(format!(
                "{} unused coefficient bytes",
                stream.len() - pos
            )));
        }
        let zz = zigzag();
        let mut planes = vec![vec![0.0f32; height * width]; channels];
        for (k, plane) in planes.iter_mut().enumerate() {
            let table = quant_table(quality, channels == 3 && k > 0);
            for byi in 0..by {
                for bxi in 0..bx {
                    let block_index = k * per_plane + byi * bx + bxi;
                    let mut freq = [0.0f32; 64];
                    for (p, &cell) in zz.iter().enumerate() {
                        freq[cell] = coeffs[p * n_blocks + block_index] as f32 * table[cell];
                    }
                    let spatial = inverse(&freq);
                    for y in 0..BLOCK.min(height - byi * BLOCK) {
                        for x in 0..BLOCK.min(width - bxi * BLOCK) {
                            plane[(byi * BLOCK + y) * width + bxi * BLOCK + x] = spatial[y * BLOCK + x];
                        }
                    }
                }
            }
        }
        Ok(from_planes(&planes, height, width))
    }
}
