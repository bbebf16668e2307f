//! Geometric substrates of the structural constraints: lane rasterization
//! (pixel level), IPM homography and bird's-eye line fitting (lane level),
//! and the perspective attention map (image level).

mod attention;
mod bev;
mod features;
mod homography;
mod raster;

use std::io::Write;

use ndarray::Array2;

pub use attention::{attention_map, attention_map_with, bilinear, AttentionMap, PamMode};
pub use bev::{fit_bev_line, fit_bev_line_with_grad, parallelism_residual, BevFit, BevLine};
pub use features::{modulate_features, FeatureGrid};
pub use homography::{Homography, HORIZON_EPS, SINGULAR_EPS};
pub use raster::{polyline_cells, rasterize_lanes, rasterize_on_rows, PixelMask};

/// Default stroke width of the ground-truth lane mask, pixels.
pub const GT_MASK_WIDTH_PX: f64 = 4.0;

/// Writes a `[0, 1]` grid as a binary portable graymap (P5, maxval 255).
pub fn write_pgm<W: Write>(grid: &Array2<f64>, mut out: W) -> std::io::Result<()> {
    let (rows, cols) = grid.dim();
    write!(out, "P5\n{cols} {rows}\n255\n")?;
    let bytes: Vec<u8> = grid
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)
}
