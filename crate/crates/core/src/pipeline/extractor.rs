//! Server-side feature extractor for image payloads.
//!
//! A deterministic stand-in for a CNN backbone: layer 1 holds the per-channel
//! mean and standard deviation over `CELL` x `CELL` pixel cells, layer 2 the
//! per-channel mean over cells twice as large. Values are scaled to `[0, 1]`.

use crate::model::{FeatureStack, FeatureTensor, Label, ModelError, Raster};

pub const CELL: usize = 8;

fn cell_stats(raster: &Raster, cell: usize, with_std: bool) -> (usize, usize, usize, Vec<f32>) {
    let rows = raster.height / cell;
    let cols = raster.width / cell;
    let ch = raster.channels;
    let per = if with_std { 2 * ch } else { ch };
    let mut values = vec![0.0f32; per * rows * cols];
    let n = (cell * cell) as f64;
    for r in 0..rows {
        for c in 0..cols {
            for k in 0..ch {
                let (mut sum, mut sq) = (0.0f64, 0.0f64);
                for y in r * cell..(r + 1) * cell {
                    for x in c * cell..(c + 1) * cell {
                        let v = raster.get(y, x, k) as f64 / 255.0;
                        sum += v;
                        sq += v * v;
                    }
                }
                let mean = sum / n;
                values[(k * rows + r) * cols + c] = mean as f32;
                if with_std {
                    let var = (sq / n - mean * mean).max(0.0);
                    values[((ch + k) * rows + r) * cols + c] = var.sqrt() as f32;
                }
            }
        }
    }
    (per, rows, cols, values)
}

pub fn extract_server_features(
    raster: &Raster,
    image_id: &str,
    category: &str,
) -> Result<FeatureStack<f32>, ModelError> {
    if raster.height % (2 * CELL) != 0 || raster.width % (2 * CELL) != 0 || raster.height == 0 {
        return Err(ModelError::Shape(format!(
            "image {}x{} is not a multiple of {} pixels",
            raster.height,
            raster.width,
            2 * CELL
        )));
    }
    let (c1, h1, w1, v1) = cell_stats(raster, CELL, true);
    let (c2, h2, w2, v2) = cell_stats(raster, 2 * CELL, false);
    FeatureStack::new(
        image_id,
        category,
        Label::Normal,
        None,
        vec![
            FeatureTensor::new(1, c1, h1, w1, v1)?,
            FeatureTensor::new(2, c2, h2, w2, v2)?,
        ],
    )
}
