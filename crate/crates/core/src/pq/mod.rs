//! Product quantization of patch vectors.
//!
//! A `d`-dimensional vector is split into `m` contiguous sub-vectors of
//! `d / m` components; each is replaced by the index of its nearest centroid
//! in a per-subspace codebook of `K` entries. Codes are transmitted bit-packed
//! at `log2(K)` bits each.

mod kmeans;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::codecs::{grid_side, CodecError, Payload, PayloadKind};
use crate::scalar::{squared_distance, Scalar};
use crate::wire::{ByteReader, ByteWriter, FormatError};

pub const CODEBOOK_MAGIC: &[u8; 4] = b"VPQC";
pub const CODEBOOK_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum PqError {
    #[error("{subspaces} subspaces do not divide dimension {dim}")]
    IndivisibleDimension { dim: usize, subspaces: usize },
    #[error("{vectors} training vectors for {centroids} centroids")]
    TooFewVectors { vectors: usize, centroids: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("vector {index} has length {found}, codebook expects {expected}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("code {code} at vector {vector}, subspace {subspace} is not below K = {k}")]
    CodeOutOfRange {
        vector: usize,
        subspace: usize,
        code: u32,
        k: usize,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Per-subspace centroids, stored `(subspace, centroid, component)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    m: usize,
    k: usize,
    sub_dim: usize,
    centroids: Vec<T>,
    seed: u64,
    /// Number of training vectors; unknown for codebooks read from disk.
    pub trained_on: Option<usize>,
}

impl<T: Scalar> Codebook<T> {
    pub fn new(m: usize, k: usize, sub_dim: usize, centroids: Vec<T>, seed: u64) -> Result<Self, PqError> {
        if m == 0 || k == 0 || sub_dim == 0 {
            return Err(PqError::InvalidParameter("m, K and sub_dim must be positive".into()));
        }
        if !k.is_power_of_two() {
            return Err(PqError::InvalidParameter(format!("K = {k} is not a power of two")));
        }
        if centroids.len() != m * k * sub_dim {
            return Err(PqError::InvalidParameter(format!(
                "{} centroid values for m={m}, K={k}, sub_dim={sub_dim}",
                centroids.len()
            )));
        }
        if centroids.iter().any(|c| !c.is_finite()) {
            return Err(PqError::InvalidParameter("non-finite centroid".into()));
        }
        Ok(Self {
            m,
            k,
            sub_dim,
            centroids,
            seed,
            trained_on: None,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sub_dim(&self) -> usize {
        self.sub_dim
    }

    pub fn dim(&self) -> usize {
        self.m * self.sub_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bits_per_code(&self) -> u32 {
        self.k.trailing_zeros()
    }

    /// All `K` centroids of one subspace, `K x sub_dim` row-major.
    pub fn subspace(&self, j: usize) -> &[T] {
        let len = self.k * self.sub_dim;
        &self.centroids[j * len..(j + 1) * len]
    }

    pub fn centroid(&self, j: usize, code: usize) -> &[T] {
        &self.subspace(j)[code * self.sub_dim..(code + 1) * self.sub_dim]
    }

    pub fn centroids(&self) -> &[T] {
        &self.centroids
    }
}

impl Codebook<f32> {
    /// `"VPQC" | version u8 | m u16 | K u32 | sub_dim u16 | seed u64 |`
    /// centroids as f32 LE in (subspace, centroid, component) order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_capacity(21 + 4 * self.centroids.len());
        w.bytes(CODEBOOK_MAGIC);
        w.u8(CODEBOOK_VERSION);
        w.u16(self.m as u16);
        w.u32(self.k as u32);
        w.u16(self.sub_dim as u16);
        w.u64(self.seed);
        w.f32_slice(&self.centroids);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PqError> {
        let mut r = ByteReader::new(bytes);
        r.magic(CODEBOOK_MAGIC)?;
        r.version(CODEBOOK_VERSION)?;
        let m = r.u16()? as usize;
        let k = r.u32()? as usize;
        let sub_dim = r.u16()? as usize;
        let seed = r.u64()?;
        let expected = m * k * sub_dim;
        if r.remaining() != expected * 4 {
            return Err(FormatError::SizeMismatch(format!(
                "{} centroid bytes for m={m}, K={k}, sub_dim={sub_dim} (expected {})",
                r.remaining(),
                expected * 4
            ))
            .into());
        }
        let centroids = r.f32_vec(expected)?;
        r.finish()?;
        Self::new(m, k, sub_dim, centroids, seed)
    }
}

/// Training knobs beyond the required `(m, K, max_iters, seed)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PqTrainParams {
    pub m: usize,
    pub k: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Independent k-means runs per subspace; the lowest-error run is kept.
    pub restarts: usize,
}

/// Per-subspace error history of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    /// `error_traces[j]` is the squared error after each assignment step of
    /// the kept run for subspace `j`.
    pub error_traces: Vec<Vec<f64>>,
}

/// Trains a codebook with one k-means run per subspace.
pub fn pq_train<T: Scalar, V: AsRef<[T]> + Sync>(
    vectors: &[V],
    m: usize,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<Codebook<T>, PqError> {
    let params = PqTrainParams {
        m,
        k,
        max_iters,
        seed,
        restarts: 1,
    };
    pq_train_traced(vectors, &params).map(|(cb, _)| cb)
}

pub fn pq_train_traced<T: Scalar, V: AsRef<[T]> + Sync>(
    vectors: &[V],
    params: &PqTrainParams,
) -> Result<(Codebook<T>, TrainTrace), PqError> {
    let PqTrainParams {
        m,
        k,
        max_iters,
        seed,
        restarts,
    } = *params;
    if m == 0 || k == 0 || max_iters == 0 || restarts == 0 {
        return Err(PqError::InvalidParameter(
            "m, K, max_iters and restarts must be positive".into(),
        ));
    }
    if !k.is_power_of_two() {
        return Err(PqError::InvalidParameter(format!("K = {k} is not a power of two")));
    }
    if vectors.len() < k {
        return Err(PqError::TooFewVectors {
            vectors: vectors.len(),
            centroids: k,
        });
    }
    let dim = vectors[0].as_ref().len();
    if dim % m != 0 || dim == 0 {
        return Err(PqError::IndivisibleDimension { dim, subspaces: m });
    }
    check_lengths(vectors, dim)?;
    let sub_dim = dim / m;

    let fits: Vec<(Vec<T>, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|j| {
            let data: Vec<T> = vectors
                .iter()
                .flat_map(|v| v.as_ref()[j * sub_dim..(j + 1) * sub_dim].iter().copied())
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            (0..restarts)
                .map(|_| kmeans::fit(&data, sub_dim, k, max_iters, &mut rng))
                .map(|f| (f.centroids, f.error_trace))
                .reduce(|best, next| {
                    if next.1.last() < best.1.last() {
                        next
                    } else {
                        best
                    }
                })
                .expect("at least one restart")
        })
        .collect();

    let mut centroids = Vec::with_capacity(m * k * sub_dim);
    let mut error_traces = Vec::with_capacity(m);
    for (c, trace) in fits {
        centroids.extend(c);
        error_traces.push(trace);
    }
    let mut codebook = Codebook::new(m, k, sub_dim, centroids, seed)?;
    codebook.trained_on = Some(vectors.len());
    Ok((codebook, TrainTrace { error_traces }))
}

fn check_lengths<T, V: AsRef<[T]>>(vectors: &[V], dim: usize) -> Result<(), PqError> {
    if let Some((index, v)) = vectors
        .iter()
        .enumerate()
        .find(|(_, v)| v.as_ref().len() != dim)
    {
        return Err(PqError::LengthMismatch {
            index,
            expected: dim,
            found: v.as_ref().len(),
        });
    }
    Ok(())
}

/// `n x m` centroid indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PqCodes {
    n: usize,
    m: usize,
    k: usize,
    codes: Vec<u32>,
}

impl PqCodes {
    pub fn new(n: usize, m: usize, k: usize, codes: Vec<u32>) -> Result<Self, PqError> {
        if codes.len() != n * m {
            return Err(PqError::InvalidParameter(format!(
                "{} codes for n={n}, m={m}",
                codes.len()
            )));
        }
        if !k.is_power_of_two() {
            return Err(PqError::InvalidParameter(format!("K = {k} is not a power of two")));
        }
        Ok(Self { n, m, k, codes })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn vector_codes(&self, i: usize) -> &[u32] {
        &self.codes[i * self.m..(i + 1) * self.m]
    }

    /// `ceil(n * m * log2(K) / 8)`.
    pub fn packed_len(&self) -> usize {
        (self.n * self.m * self.k.trailing_zeros() as usize).div_ceil(8)
    }
}

/// Nearest centroid per subspace; equidistant centroids resolve to the lower
/// index.
pub fn pq_encode<T: Scalar, V: AsRef<[T]> + Sync>(
    vectors: &[V],
    cb: &Codebook<T>,
) -> Result<PqCodes, PqError> {
    check_lengths(vectors, cb.dim())?;
    let sub = cb.sub_dim;
    let codes: Vec<u32> = vectors
        .par_iter()
        .flat_map_iter(|v| {
            let v = v.as_ref();
            (0..cb.m).map(move |j| {
                kmeans::nearest(&v[j * sub..(j + 1) * sub], cb.subspace(j), sub).0 as u32
            })
        })
        .collect();
    PqCodes::new(vectors.len(), cb.m, cb.k, codes)
}

/// Concatenates the selected centroids of every vector.
pub fn pq_decode<T: Scalar>(codes: &PqCodes, cb: &Codebook<T>) -> Result<Vec<Vec<T>>, PqError> {
    if codes.m != cb.m || codes.k != cb.k {
        return Err(PqError::InvalidParameter(format!(
            "codes for m={}, K={} against codebook m={}, K={}",
            codes.m, codes.k, cb.m, cb.k
        )));
    }
    (0..codes.n)
        .map(|i| {
            let mut out = Vec::with_capacity(cb.dim());
            for (j, &code) in codes.vector_codes(i).iter().enumerate() {
                if code as usize >= cb.k {
                    return Err(PqError::CodeOutOfRange {
                        vector: i,
                        subspace: j,
                        code,
                        k: cb.k,
                    });
                }
                out.extend_from_slice(cb.centroid(j, code as usize));
            }
            Ok(out)
        })
        .collect()
}

/// Mean squared reconstruction error per vector.
pub fn reconstruction_error<T: Scalar, V: AsRef<[T]>>(vectors: &[V], decoded: &[Vec<T>]) -> f64 {
    let total: f64 = vectors
        .iter()
        .zip(decoded)
        .map(|(v, d)| squared_distance(v.as_ref(), d).as_f64())
        .sum();
    total / vectors.len().max(1) as f64
}

/// Spatial placement of the coded vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodeLayout {
    /// One vector per cell of a `rows x cols` grid, row-major.
    Dense { rows: usize, cols: usize },
    /// Vectors at the listed grid cells, in list order.
    Sparse {
        rows: usize,
        cols: usize,
        coordinates: Vec<(usize, usize)>,
    },
}

impl CodeLayout {
    fn dims(&self) -> (usize, usize) {
        match self {
            Self::Dense { rows, cols } | Self::Sparse { rows, cols, .. } => (*rows, *cols),
        }
    }

    fn count(&self) -> usize {
        match self {
            Self::Dense { rows, cols } => rows * cols,
            Self::Sparse { coordinates, .. } => coordinates.len(),
        }
    }
}

const FLAG_CODEBOOK: u8 = 1;
const FLAG_COORDINATES: u8 = 2;

fn pack_codes(codes: &PqCodes) -> Vec<u8> {
    let bits = codes.k.trailing_zeros();
    let mut out = vec![0u8; codes.packed_len()];
    let mut bit_pos = 0usize;
    for &code in &codes.codes {
        for b in (0..bits).rev() {
            if (code >> b) & 1 == 1 {
                out[bit_pos / 8] |= 0x80 >> (bit_pos % 8);
            }
            bit_pos += 1;
        }
    }
    out
}

fn unpack_codes(bytes: &[u8], n: usize, m: usize, bits: u32) -> Vec<u32> {
    let mut codes = Vec::with_capacity(n * m);
    let mut bit_pos = 0usize;
    for _ in 0..n * m {
        let mut code = 0u32;
        for _ in 0..bits {
            let bit = (bytes[bit_pos / 8] >> (7 - bit_pos % 8)) & 1;
            code = (code << 1) | bit as u32;
            bit_pos += 1;
        }
        codes.push(code);
    }
    codes
}

/// `pq_codes` payload. The codebook rides along only when given.
///
/// meta: `rows u16 | cols u16 | n u32 | m u16 | bits u8 | flags u8`;
/// body: `[codebook_len u32 | codebook file]` when flagged, then
/// `[n x (row u16, col u16)]` for a sparse layout, then the codes packed
/// most-significant-bit first at `bits` bits each, zero padded to a byte.
pub fn pq_payload(
    codes: &PqCodes,
    layout: &CodeLayout,
    codebook: Option<&Codebook<f32>>,
) -> Result<Payload, PqError> {
    if layout.count() != codes.n {
        return Err(PqError::InvalidParameter(format!(
            "layout holds {} vectors, codes hold {}",
            layout.count(),
            codes.n
        )));
    }
    let (rows, cols) = layout.dims();
    let mut flags = 0u8;
    let mut body = ByteWriter::new();
    if let Some(cb) = codebook {
        flags |= FLAG_CODEBOOK;
        let bytes = cb.to_bytes();
        body.u32(bytes.len() as u32);
        body.bytes(&bytes);
    }
    if let CodeLayout::Sparse { coordinates, .. } = layout {
        flags |= FLAG_COORDINATES;
        for &(r, c) in coordinates {
            if r >= rows || c >= cols {
                return Err(PqError::InvalidParameter(format!(
                    "coordinate ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            body.u16(r as u16);
            body.u16(c as u16);
        }
    }
    body.bytes(&pack_codes(codes));
    let mut meta = ByteWriter::with_capacity(12);
    meta.u16(grid_side(rows, "grid rows")?);
    meta.u16(grid_side(cols, "grid cols")?);
    meta.u32(codes.n as u32);
    meta.u16(codes.m as u16);
    meta.u8(codes.k.trailing_zeros() as u8);
    meta.u8(flags);
    Ok(Payload::new(
        PayloadKind::PqCodes,
        meta.into_inner(),
        body.into_inner(),
    ))
}

/// Contents of a parsed `pq_codes` payload.
#[derive(Debug, Clone, PartialEq)]
pub struct PqTransmission {
    pub codes: PqCodes,
    pub layout: CodeLayout,
    pub codebook: Option<Codebook<f32>>,
}

pub fn pq_payload_decode(payload: &Payload) -> Result<PqTransmission, PqError> {
    payload.expect_kind(PayloadKind::PqCodes)?;
    let mut meta = ByteReader::new(payload.meta());
    let rows = meta.u16()? as usize;
    let cols = meta.u16()? as usize;
    let n = meta.u32()? as usize;
    let m = meta.u16()? as usize;
    let bits = meta.u8()? as u32;
    let flags = meta.u8()?;
    meta.finish()?;
    if bits > 31 {
        return Err(FormatError::InvalidField {
            field: "bits per code",
            detail: bits.to_string(),
        }
        .into());
    }
    let mut body = ByteReader::new(payload.body());
    let codebook = if flags & FLAG_CODEBOOK != 0 {
        let len = body.u32()? as usize;
        Some(Codebook::from_bytes(body.take(len)?)?)
    } else {
        None
    };
    let layout = if flags & FLAG_COORDINATES != 0 {
        let mut coordinates = Vec::with_capacity(n);
        for _ in 0..n {
            let r = body.u16()? as usize;
            let c = body.u16()? as usize;
            if r >= rows || c >= cols {
                return Err(FormatError::InvalidField {
                    field: "pq coordinate",
                    detail: format!("({r}, {c}) outside {rows}x{cols}"),
                }
                .into());
            }
            coordinates.push((r, c));
        }
        CodeLayout::Sparse {
            rows,
            cols,
            coordinates,
        }
    } else {
        if n != rows * cols {
            return Err(FormatError::SizeMismatch(format!(
                "dense layout {rows}x{cols} with {n} vectors"
            ))
            .into());
        }
        CodeLayout::Dense { rows, cols }
    };
    let packed_len = (n * m * bits as usize).div_ceil(8);
    let packed = body.take(packed_len)?;
    body.finish()?;
    let codes = PqCodes::new(n, m, 1usize << bits, unpack_codes(packed, n, m, bits))?;
    Ok(PqTransmission {
        codes,
        layout,
        codebook,
    })
}
