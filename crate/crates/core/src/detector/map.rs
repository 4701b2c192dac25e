//! Patch-score grid to pixel anomaly map: bilinear upsampling, Gaussian
//! smoothing, per-map min-max normalisation.

use super::DetectorError;

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyMap {
    pub height: usize,
    pub width: usize,
    /// Row-major, every value in `[0, 1]`.
    pub values: Vec<f64>,
}

impl AnomalyMap {
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Row-major position of the first maximum.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width)
    }
}

/// Half-pixel-centre bilinear resampling: output pixel `y` samples the input
/// at `(y + 0.5) * in / out - 0.5`, clamped to the border.
pub fn bilinear_upsample(grid: &[f64], rows: usize, cols: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        (0..n_out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5)
                    .clamp(0.0, (n_in - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let ys = axis(rows, out_h);
    let xs = axis(cols, out_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = grid[y0 * cols + x0] * (1.0 - fx) + grid[y0 * cols + x1] * fx;
            let bottom = grid[y1 * cols + x0] * (1.0 - fx) + grid[y1 * cols + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

fn reflect(i: isize, n: usize) -> usize {
    // Mirror about the edges, repeating the edge sample: d c b a | a b c d.
    let n = n as isize;
    let period = 2 * n;
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

/// Separable Gaussian blur with standard deviation `sigma` pixels, kernel
/// truncated at `4 sigma` and mirrored borders. `sigma = 0` is the identity.
pub fn gaussian_smooth(values: &[f64], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);

    let mut tmp = vec![0.0; values.len()];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        for x in 0..width {
            tmp[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * row[reflect(x as isize + k as isize - radius, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[reflect(y as isize + k as isize - radius, height) * width + x])
                .sum();
        }
    }
    out
}

pub fn make_anomaly_map(
    scores: &[f64],
    rows: usize,
    cols: usize,
    out_h: usize,
    out_w: usize,
    sigma: f64,
) -> Result<AnomalyMap, DetectorError> {
    if rows == 0 || cols == 0 || scores.len() != rows * cols {
        return Err(DetectorError::Geometry(format!(
            "{} scores for a {rows}x{cols} grid",
            scores.len()
        )));
    }
    if out_h < rows || out_w < cols {
        return Err(DetectorError::Geometry(format!(
            "output {out_h}x{out_w} smaller than grid {rows}x{cols}"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(DetectorError::Geometry(format!("sigma {sigma}")));
    }
    let up = bilinear_upsample(scores, rows, cols, out_h, out_w);
    let mut values = gaussian_smooth(&up, out_h, out_w, sigma);
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if range > 0.0 && range.is_finite() {
        values.iter_mut().for_each(|v| *v = ((*v - lo) / range).clamp(0.0, 1.0));
    } else {
        values.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(AnomalyMap {
        height: out_h,
        width: out_w,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_grid_gives_a_zero_map() {
        let m = make_anomaly_map(&[3.0; 4], 2, 2, 16, 16, 2.0).unwrap();
        assert!(m.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hot_patch_lands_in_its_quadrant() {
        for hot in 0..4 {
            let mut g = [0.0; 4];
            g[hot] = 5.0;
            let m = make_anomaly_map(&g, 2, 2, 32, 32, 3.0).unwrap();
            let (y, x) = m.argmax();
            assert_eq!((y / 16, x / 16), (hot / 2, hot % 2));
        }
    }

    #[test]
    fn zero_sigma_is_plain_bilinear() {
        let g = [0.0, 1.0, 2.0, 4.0];
        let m = make_anomaly_map(&g, 2, 2, 4, 4, 0.0).unwrap();
        let up = bilinear_upsample(&g, 2, 2, 4, 4);
        let (lo, hi) = (0.0, 4.0);
        for (a, b) in m.values.iter().zip(&up) {
            assert!((a - (b - lo) / (hi - lo)).abs() < 1e-15);
        }
        // Half-pixel alignment: the second output column samples x = 0.25.
        assert!((up[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn smoothing_preserves_mass_on_interior_and_constants() {
        let v = vec![2.5; 100];
        assert!(gaussian_smooth(&v, 10, 10, 1.5).iter().all(|&x| (x - 2.5).abs() < 1e-12));
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
    }

    #[test]
    fn positive_scaling_keeps_the_argmax() {
        let g: Vec<f64> = (0..16).map(|i| ((i * 7) % 11) as f64).collect();
        let a = make_anomaly_map(&g, 4, 4, 32, 32, 2.0).unwrap();
        let scaled: Vec<f64> = g.iter().map(|x| x * 3.7).collect();
        let b = make_anomaly_map(&scaled, 4, 4, 32, 32, 2.0).unwrap();
        assert_eq!(a.argmax(), b.argmax());
    }
}
