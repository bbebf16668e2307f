use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::anchoring::{grid_len, VanishingPoint};
use crate::error::{LaneError, Result};
use crate::repr::ImageSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PamMode {
    /// Gaussian centered on the VP: most weight near the vanishing point.
    #[default]
    Peaked,
    /// `1 - peaked`: most weight far from the vanishing point.
    Inverted,
}

/// Perspective attention map, a 2D Gaussian around the vanishing point
/// sampled at cell centers and scaled so its largest value is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub grid: Array2<f64>,
    pub vp: VanishingPoint,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub scale: u32,
    pub mode: PamMode,
}

pub fn attention_map(
    vp: &VanishingPoint,
    spec: &ImageSpec,
    scale: u32,
    sigma_x: f64,
    sigma_y: f64,
) -> Result<AttentionMap> {
    attention_map_with(vp, spec, scale, sigma_x, sigma_y, PamMode::Peaked)
}

pub fn attention_map_with(
    vp: &VanishingPoint,
    spec: &ImageSpec,
    scale: u32,
    sigma_x: f64,
    sigma_y: f64,
    mode: PamMode,
) -> Result<AttentionMap> {
    if !(sigma_x > 0.0) {
        return Err(LaneError::param("sigma_x", "must be > 0"));
    }
    if !(sigma_y > 0.0) {
        return Err(LaneError::param("sigma_y", "must be > 0"));
    }
    if scale == 0 {
        return Err(LaneError::param("scale", "must be >= 1"));
    }
    let s = scale as f64;
    let (rows, cols) = (grid_len(spec.height, scale), grid_len(spec.width, scale));
    // work in log space so far-away cells do not underflow before normalizing
    let log_e = Array2::from_shape_fn((rows, cols), |(r, c)| {
        let dx = (c as f64 + 0.5) * s - vp.x;
        let dy = (r as f64 + 0.5) * s - vp.y;
        -(dx * dx / (2.0 * sigma_x * sigma_x) + dy * dy / (2.0 * sigma_y * sigma_y))
    });
    let peak = log_e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut grid = log_e.mapv(|v| (v - peak).exp());
    if mode == PamMode::Inverted {
        grid.mapv_inplace(|v| 1.0 - v);
    }
    Ok(AttentionMap {
        grid,
        vp: *vp,
        sigma_x,
        sigma_y,
        scale,
        mode,
    })
}

/// Bilinear sample of a cell-centered grid at image coordinates, clamped at the borders.
pub fn bilinear(grid: &Array2<f64>, scale: u32, x: f64, y: f64) -> f64 {
    let (rows, cols) = grid.dim();
    let (r0, r1, fr) = axis_weights(y / scale as f64 - 0.5, rows);
    let (c0, c1, fc) = axis_weights(x / scale as f64 - 0.5, cols);
    let top = grid[[r0, c0]] * (1.0 - fc) + grid[[r0, c1]] * fc;
    let bottom = grid[[r1, c0]] * (1.0 - fc) + grid[[r1, c1]] * fc;
    top * (1.0 - fr) + bottom * fr
}

/// Lower index, upper index and fractional weight of the upper one.
pub(crate) fn axis_weights(u: f64, n: usize) -> (usize, usize, f64) {
    let max = (n - 1) as f64;
    let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, max) };
    let i0 = u.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, u - i0 as f64)
}

impl AttentionMap {
    /// `E(x, y)` by bilinear interpolation.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        bilinear(&self.grid, self.scale, x, y)
    }

    /// Grid index of the largest value (first in row-major order on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let cols = self.grid.ncols();
        let mut best = (0, f64::NEG_INFINITY);
        for (i, &v) in self.grid.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        (best.0 / cols, best.0 % cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec() -> ImageSpec {
        ImageSpec::new(100, 200, 11).unwrap()
    }

    #[test]
    fn peak_and_one_sigma_value() {
        let vp = VanishingPoint::new(100.5, 40.5);
        let pam = attention_map(&vp, &spec(), 1, 20.0, 10.0).unwrap();
        assert_eq!(pam.grid[[40, 100]], 1.0);
        assert_eq!(pam.argmax(), (40, 100));
        assert_abs_diff_eq!(pam.grid[[40, 120]], (-0.5f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(pam.sample(120.5, 40.5), 0.6065306597, epsilon = 1e-9);
    }

    #[test]
    fn symmetric_about_vp() {
        let vp = VanishingPoint::new(100.5, 40.5);
        let pam = attention_map(&vp, &spec(), 1, 20.0, 10.0).unwrap();
        for d in 1..30 {
            assert_eq!(pam.grid[[40, 100 - d]], pam.grid[[40, 100 + d]]);
            assert_eq!(pam.grid[[40 - d, 100]], pam.grid[[40 + d, 100]]);
        }
    }

    #[test]
    fn off_center_vp_still_peaks_at_one() {
        let vp = VanishingPoint::new(37.2, 61.9);
        let pam = attention_map(&vp, &spec(), 4, 50.0, 25.0).unwrap();
        let (r, c) = pam.argmax();
        assert_eq!(pam.grid[[r, c]], 1.0);
        assert_eq!((r, c), (15, 9));
        assert!(pam.grid.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn inverted_mode_and_bad_sigma() {
        let vp = VanishingPoint::new(100.5, 40.5);
        let pam = attention_map_with(&vp, &spec(), 1, 20.0, 10.0, PamMode::Inverted).unwrap();
        assert_eq!(pam.grid[[40, 100]], 0.0);
        assert!(attention_map(&vp, &spec(), 1, 0.0, 10.0).is_err());
        assert!(attention_map(&vp, &spec(), 1, 1.0, -1.0).is_err());
    }

    #[test]
    fn bilinear_reproduces_linear_ramp() {
        let g = Array2::from_shape_fn((5, 8), |(_, c)| (c as f64 + 0.5) * 4.0);
        assert_abs_diff_eq!(bilinear(&g, 4, 13.7, 9.0), 13.7, epsilon = 1e-12);
        // clamped outside the outermost centers
        assert_abs_diff_eq!(bilinear(&g, 4, 0.3, 9.0), 2.0, epsilon = 1e-12);
    }
}
