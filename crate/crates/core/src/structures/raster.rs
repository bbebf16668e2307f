use ndarray::Array2;

use crate::anchoring::grid_len;
use crate::error::{LaneError, Result};
use crate::geometry::{point_segment_distance, Point2};
use crate::repr::{ImageSpec, LanePolyline};

/// A per-cell lane probability (or binary lane mask) on a downsampled grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMask {
    pub grid: Array2<f64>,
    pub scale: u32,
}

impl PixelMask {
    pub fn zeros(spec: &ImageSpec, scale: u32) -> Self {
        Self {
            grid: Array2::zeros((grid_len(spec.height, scale), grid_len(spec.width, scale))),
            scale,
        }
    }

    pub fn count(&self) -> usize {
        self.grid.iter().filter(|&&v| v > 0.0).count()
    }
}

/// Flat indices (`row * cols + col`) of cells whose centers lie within
/// `width_px / 2` of the polyline through `points`, sorted and unique.
///
/// Cell `(r, c)` has its center at `((c + 0.5) * scale, (r + 0.5) * scale)`.
/// Only cells inside the `rows x cols` grid are reported, so parts of the
/// polyline outside the image are clipped.
pub fn polyline_cells(
    points: &[Point2],
    rows: usize,
    cols: usize,
    scale: u32,
    width_px: f64,
) -> Vec<usize> {
    let s = scale as f64;
    let half = width_px / 2.0;
    let mut cells = Vec::new();
    let segments: Vec<(Point2, Point2)> = match points.len() {
        0 => return cells,
        1 => vec![(points[0], points[0])],
        _ => points.windows(2).map(|w| (w[0], w[1])).collect(),
    };
    let to_cells = |lo: f64, hi: f64, n: usize| -> Option<(usize, usize)> {
        let first = (lo / s - 0.5).ceil().max(0.0);
        let last = (hi / s - 0.5).floor().min(n as f64 - 1.0);
        (first <= last).then_some((first as usize, last as usize))
    };
    for (a, b) in segments {
        let Some((c0, c1)) = to_cells(a.x.min(b.x) - half, a.x.max(b.x) + half, cols) else {
            continue;
        };
        let Some((r0, r1)) = to_cells(a.y.min(b.y) - half, a.y.max(b.y) + half, rows) else {
            continue;
        };
        for r in r0..=r1 {
            let y = (r as f64 + 0.5) * s;
            for c in c0..=c1 {
                let p = Point2::new((c as f64 + 0.5) * s, y);
                if point_segment_distance(p, a, b) <= half {
                    cells.push(r * cols + c);
                }
            }
        }
    }
    cells.sort_unstable();
    cells.dedup();
    cells
}

/// Binary mask of all lanes drawn as thick polylines with round joins.
pub fn rasterize_lanes(
    lanes: &[LanePolyline],
    spec: &ImageSpec,
    scale: u32,
    width_px: f64,
) -> Result<PixelMask> {
    rasterize_on_rows(lanes, &spec.rows(), spec, scale, width_px)
}

/// As [`rasterize_lanes`] for lanes sampled on an explicit row grid.
pub fn rasterize_on_rows(
    lanes: &[LanePolyline],
    row_ys: &[f64],
    spec: &ImageSpec,
    scale: u32,
    width_px: f64,
) -> Result<PixelMask> {
    if !(width_px >= 1.0) {
        return Err(LaneError::param("width_px", "must be >= 1"));
    }
    if scale == 0 {
        return Err(LaneError::param("scale", "must be >= 1"));
    }
    let mut mask = PixelMask::zeros(spec, scale);
    let (rows, cols) = mask.grid.dim();
    for lane in lanes {
        if lane.len() != row_ys.len() {
            return Err(LaneError::ShapeMismatch(format!(
                "lane has {} rows, grid has {}",
                lane.len(),
                row_ys.len()
            )));
        }
        let cells = polyline_cells(&lane.points(row_ys), rows, cols, scale, width_px);
        let flat = mask.grid.as_slice_mut().expect("standard layout");
        for c in cells {
            flat[c] = 1.0;
        }
    }
    Ok(mask)
}
