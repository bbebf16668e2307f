use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{LaneError, Result};
use crate::repr::{intersect_lines, BoxLineCode, ImageSpec};

/// Unit-normalized lines closer to parallel than this are not intersected.
pub const PARALLEL_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanishingPoint {
    pub x: f64,
    pub y: f64,
    /// Number of line pairs (or lines, for least squares) that contributed.
    pub support: usize,
}

impl VanishingPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, support: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VpMethod {
    /// Mean of all pairwise center-line intersections.
    #[default]
    PairwiseMean,
    /// Point minimizing the summed squared distance to every center line.
    LeastSquares,
}

/// Approximates the vanishing point from the center lines of annotated lanes.
pub fn approximate_vp(lanes: &[BoxLineCode]) -> Result<VanishingPoint> {
    approximate_vp_with(lanes, VpMethod::PairwiseMean)
}

pub fn approximate_vp_with(lanes: &[BoxLineCode], method: VpMethod) -> Result<VanishingPoint> {
    if lanes.len() < 2 {
        return Err(LaneError::DegenerateInput(format!(
            "need at least 2 lanes to locate a vanishing point, got {}",
            lanes.len()
        )));
    }
    let lines: Vec<(f64, f64, f64)> = lanes
        .iter()
        .map(|l| (l.center.a, l.center.b, l.center.c))
        .collect();
    match method {
        VpMethod::PairwiseMean => pairwise_mean(&lines),
        VpMethod::LeastSquares => least_squares(&lines),
    }
}

fn pairwise_mean(lines: &[(f64, f64, f64)]) -> Result<VanishingPoint> {
    let (mut sx, mut sy, mut count) = (0.0, 0.0, 0usize);
    for (i, &l1) in lines.iter().enumerate() {
        for &l2 in &lines[i + 1..] {
            if let Some(p) = intersect_lines(l1, l2, PARALLEL_EPS) {
                sx += p.x;
                sy += p.y;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(LaneError::NoIntersections);
    }
    Ok(VanishingPoint {
        x: sx / count as f64,
        y: sy / count as f64,
        support: count,
    })
}

fn least_squares(lines: &[(f64, f64, f64)]) -> Result<VanishingPoint> {
    let (mut saa, mut sab, mut sbb, mut sac, mut sbc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(a, b, c) in lines {
        saa += a * a;
        sab += a * b;
        sbb += b * b;
        sac += a * c;
        sbc += b * c;
    }
    let det = saa * sbb - sab * sab;
    if det.abs() < PARALLEL_EPS * PARALLEL_EPS {
        return Err(LaneError::NoIntersections);
    }
    Ok(VanishingPoint {
        x: (-sac * sbb + sbc * sab) / det,
        y: (-sbc * saa + sac * sab) / det,
        support: lines.len(),
    })
}

/// Binary disc around the vanishing point on a downsampled grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VpMask {
    /// `ceil(H / scale) x ceil(W / scale)`, entries 0 or 1.
    pub grid: Array2<f64>,
    pub radius_px: f64,
    pub scale: u32,
    /// False when the vanishing point lies outside the image.
    pub vp_inside: bool,
}

impl VpMask {
    pub fn count(&self) -> usize {
        self.grid.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
}

/// Number of grid cells covering `extent` pixels at `scale` pixels per cell.
pub fn grid_len(extent: u32, scale: u32) -> usize {
    extent.div_ceil(scale) as usize
}

/// Marks every cell whose full-resolution center lies within `radius_px` of the VP.
pub fn vp_mask(
    vp: &VanishingPoint,
    spec: &ImageSpec,
    scale: u32,
    radius_px: f64,
) -> Result<VpMask> {
    if !(radius_px > 0.0) {
        return Err(LaneError::param("radius_px", "must be > 0"));
    }
    if scale == 0 {
        return Err(LaneError::param("scale", "must be >= 1"));
    }
    let rows = grid_len(spec.height, scale);
    let cols = grid_len(spec.width, scale);
    let s = scale as f64;
    let r2 = radius_px * radius_px;
    let grid = Array2::from_shape_fn((rows, cols), |(r, c)| {
        let dx = (c as f64 + 0.5) * s - vp.x;
        let dy = (r as f64 + 0.5) * s - vp.y;
        if dx * dx + dy * dy <= r2 {
            1.0
        } else {
            0.0
        }
    });
    let vp_inside =
        (0.0..spec.width as f64).contains(&vp.x) && (0.0..spec.height as f64).contains(&vp.y);
    let mask = VpMask {
        grid,
        radius_px,
        scale,
        vp_inside,
    };
    if !vp_inside || mask.is_empty() {
        log::warn!(
            "vanishing point ({:.1}, {:.1}) gives a {} mask",
            vp.x,
            vp.y,
            if mask.is_empty() { "empty" } else { "clipped" }
        );
    }
    Ok(mask)
}
