//! Domain types for images and per-layer feature tensors, plus
//! the two embeddings built from a feature stack: the spatially aligned patch
//! grid and the flattened whole-image vector.
//!
//! Layout conventions (shared bit-exactly by edge and server):
//! - [`FeatureTensor`] values are channel-major: index `c * H * W + h * W + w`.
//! - [`Raster`] pixels are interleaved row-major: index `(y * W + x) * channels + k`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("tensor value count {found} does not match C*H*W = {expected}")]
    ValueCount { expected: usize, found: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("layer indices must be strictly increasing ({previous} then {next})")]
    LayerOrder { previous: u8, next: u8 },
    #[error(
        "layer {layer} with spatial size {height}x{width} cannot be replicated onto a {rows}x{cols} grid"
    )]
    Alignment {
        layer: u8,
        height: usize,
        width: usize,
        rows: usize,
        cols: usize,
    },
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("duplicate or out-of-bounds patch at ({row}, {col})")]
    PatchPosition { row: usize, col: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn is_anomalous(self) -> bool {
        matches!(self, Label::Anomalous)
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Anomalous => 1,
        }
    }

    pub fn from_byte(byte: u8) -> Option<Self> {
        match byte {
            0 => Some(Label::Normal),
            1 => Some(Label::Anomalous),
            _ => None,
        }
    }
}

/// 8-bit raster with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self, ModelError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(ModelError::Empty("raster dimensions"));
        }
        if data.len() != height * width * channels {
            return Err(ModelError::ValueCount {
                expected: height * width * channels,
                found: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0; height * width * channels],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, k: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + k]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, k: usize, value: u8) {
        self.data[(y * self.width + x) * self.channels + k] = value;
    }

    pub fn byte_len(&self) -> usize {
        self.data.len()
    }
}

/// Binary ground-truth mask; any nonzero byte marks an anomalous pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self, ModelError> {
        if data.len() != height * width {
            return Err(ModelError::ValueCount {
                expected: height * width,
                found: data.len(),
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn is_positive(&self, index: usize) -> bool {
        self.data[index] != 0
    }

    pub fn positive_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSample {
    pub id: String,
    pub category: String,
    pub pixels: Raster,
    pub label: Label,
    pub mask: Option<Mask>,
}

impl ImageSample {
    pub fn new(
        id: impl Into<String>,
        category: impl Into<String>,
        pixels: Raster,
        label: Label,
        mask: Option<Mask>,
    ) -> Result<Self, ModelError> {
        if pixels.channels != 3 {
            return Err(ModelError::Shape(format!(
                "image samples carry 3 channels, got {}",
                pixels.channels
            )));
        }
        if let Some(m) = &mask {
            if m.height != pixels.height || m.width != pixels.width {
                return Err(ModelError::Shape(format!(
                    "mask {}x{} does not match image {}x{}",
                    m.height, m.width, pixels.height, pixels.width
                )));
            }
            if label == Label::Normal && m.positive_count() > 0 {
                return Err(ModelError::Shape("normal image with a non-empty mask".into()));
            }
        }
        Ok(Self {
            id: id.into(),
            category: category.into(),
            pixels,
            label,
            mask,
        })
    }
}

/// Activation map of one backbone layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor<T> {
    layer: u8,
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Scalar> FeatureTensor<T> {
    pub fn new(
        layer: u8,
        channels: usize,
        height: usize,
        width: usize,
        values: Vec<T>,
    ) -> Result<Self, ModelError> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(ModelError::Empty("tensor dimensions"));
        }
        let expected = channels * height * width;
        if values.len() != expected {
            return Err(ModelError::ValueCount {
                expected,
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite(i));
        }
        Ok(Self {
            layer,
            channels,
            height,
            width,
            values,
        })
    }

    pub fn layer(&self) -> u8 {
        self.layer
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, c: usize, h: usize, w: usize) -> T {
        self.values[(c * self.height + h) * self.width + w]
    }

    /// The `C`-long vector across channels at spatial location `(h, w)`.
    pub fn channel_vector(&self, h: usize, w: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.channels).map(move |c| self.at(c, h, w))
    }
}

/// Per-layer activations of one image, shallowest layer first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack<T> {
    pub image_id: String,
    pub category: String,
    pub label: Label,
    pub mask: Option<Mask>,
    layers: Vec<FeatureTensor<T>>,
}

impl<T: Scalar> FeatureStack<T> {
    pub fn new(
        image_id: impl Into<String>,
        category: impl Into<String>,
        label: Label,
        mask: Option<Mask>,
        layers: Vec<FeatureTensor<T>>,
    ) -> Result<Self, ModelError> {
        if layers.is_empty() {
            return Err(ModelError::Empty("feature stack has no layers"));
        }
        for pair in layers.windows(2) {
            if pair[1].layer <= pair[0].layer {
                return Err(ModelError::LayerOrder {
                    previous: pair[0].layer,
                    next: pair[1].layer,
                });
            }
        }
        Ok(Self {
            image_id: image_id.into(),
            category: category.into(),
            label,
            mask,
            layers,
        })
    }

    pub fn layers(&self) -> &[FeatureTensor<T>] {
        &self.layers
    }

    /// Patch dimensionality `d = sum of C` over layers.
    pub fn patch_dim(&self) -> usize {
        self.layers.iter().map(|l| l.channels).sum()
    }

    /// Length of the flattened embedding, `sum of C*H*W` over layers.
    pub fn embedding_len(&self) -> usize {
        self.layers.iter().map(|l| l.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeature<T> {
    pub row: usize,
    pub col: usize,
    pub vector: Vec<T>,
}

/// Patch vectors on a `rows x cols` grid. A full grid stores its patches in
/// row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid<T> {
    rows: usize,
    cols: usize,
    dim: usize,
    patches: Vec<PatchFeature<T>>,
}

impl<T: Scalar> PatchGrid<T> {
    pub fn new(
        rows: usize,
        cols: usize,
        dim: usize,
        patches: Vec<PatchFeature<T>>,
    ) -> Result<Self, ModelError> {
        if rows == 0 || cols == 0 || dim == 0 {
            return Err(ModelError::Empty("patch grid dimensions"));
        }
        if patches.len() > rows * cols {
            return Err(ModelError::Shape(format!(
                "{} patches on a {rows}x{cols} grid",
                patches.len()
            )));
        }
        let mut seen = vec![false; rows * cols];
        for p in &patches {
            if p.row >= rows || p.col >= cols || seen[p.row * cols + p.col] {
                return Err(ModelError::PatchPosition {
                    row: p.row,
                    col: p.col,
                });
            }
            seen[p.row * cols + p.col] = true;
            if p.vector.len() != dim {
                return Err(ModelError::ValueCount {
                    expected: dim,
                    found: p.vector.len(),
                });
            }
            if let Some(i) = p.vector.iter().position(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite(i));
            }
        }
        let mut patches = patches;
        patches.sort_by_key(|p| (p.row, p.col));
        Ok(Self {
            rows,
            cols,
            dim,
            patches,
        })
    }

    /// Builds a full grid from a row-major `rows*cols x dim` matrix.
    pub fn from_rows(rows: usize, cols: usize, dim: usize, data: &[T]) -> Result<Self, ModelError> {
        if data.len() != rows * cols * dim {
            return Err(ModelError::ValueCount {
                expected: rows * cols * dim,
                found: data.len(),
            });
        }
        let patches = data
            .chunks_exact(dim.max(1))
            .enumerate()
            .map(|(i, v)| PatchFeature {
                row: i / cols,
                col: i % cols,
                vector: v.to_vec(),
            })
            .collect();
        Self::new(rows, cols, dim, patches)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_full(&self) -> bool {
        self.patches.len() == self.cells()
    }

    pub fn patches(&self) -> &[PatchFeature<T>] {
        &self.patches
    }

    pub fn into_patches(self) -> Vec<PatchFeature<T>> {
        self.patches
    }

    pub fn patch(&self, row: usize, col: usize) -> Option<&PatchFeature<T>> {
        if self.is_full() {
            return self.patches.get(row * self.cols + col);
        }
        self.patches
            .binary_search_by_key(&(row, col), |p| (p.row, p.col))
            .ok()
            .map(|i| &self.patches[i])
    }
}

/// Concatenates, per location of the shallowest (largest) layer's grid, each
/// layer's channel vector in layer order. Coarser layers are replicated by
/// nearest neighbour, which requires integer upsampling factors.
pub fn build_patch_grid<T: Scalar>(stack: &FeatureStack<T>) -> Result<PatchGrid<T>, ModelError> {
    let layers = stack.layers();
    let rows = layers.iter().map(|l| l.height).max().unwrap_or(0);
    let cols = layers.iter().map(|l| l.width).max().unwrap_or(0);
    let mut factors = Vec::with_capacity(layers.len());
    for l in layers {
        if rows % l.height != 0 || cols % l.width != 0 {
            return Err(ModelError::Alignment {
                layer: l.layer,
                height: l.height,
                width: l.width,
                rows,
                cols,
            });
        }
        factors.push((rows / l.height, cols / l.width));
    }
    let dim = stack.patch_dim();
    let mut patches = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut vector = Vec::with_capacity(dim);
            for (l, &(fr, fc)) in layers.iter().zip(&factors) {
                vector.extend(l.channel_vector(r / fr, c / fc));
            }
            patches.push(PatchFeature { row: r, col: c, vector });
        }
    }
    Ok(PatchGrid {
        rows,
        cols,
        dim,
        patches,
    })
}

/// Whole-image embedding: every layer flattened channel-major, in layer order.
pub fn flatten_embedding<T: Scalar>(stack: &FeatureStack<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(stack.embedding_len());
    for l in stack.layers() {
        out.extend_from_slice(l.values());
    }
    out
}
