use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::anchoring::VanishingPoint;
use crate::error::{LaneError, Result};
use crate::repr::{ImageSpec, LanePolyline};
use crate::structures::Homography;

/// Lanes start this far below the vanishing point, where they are still distinguishable.
pub const HORIZON_MARGIN_PX: f64 = 10.0;

/// A road scene with known geometry: every lane is the image of a straight
/// ground line, and all ground lines are parallel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    /// Image to bird's-eye view; maps `vp_true` to infinity.
    pub homography_true: Homography,
    pub lanes: Vec<LanePolyline>,
    pub vp_true: VanishingPoint,
    pub seed: u64,
    pub noise_px: f64,
}

/// Samples a scene with `n_lanes` lanes and Gaussian x-noise of `noise_px`.
///
/// The camera is a random IPM homography whose horizon row is the VP row.
/// Ground lines are chosen by their crossing of the bottom image row, then
/// mapped back into the image through the VP, which is exactly where the
/// homography sends parallel ground lines.
pub fn generate_scene(
    seed: u64,
    spec: &ImageSpec,
    n_lanes: usize,
    noise_px: f64,
) -> Result<SyntheticScene> {
    spec.validate()?;
    if !(2..=8).contains(&n_lanes) {
        return Err(LaneError::param("n_lanes", "must lie in 2..=8"));
    }
    if !(noise_px >= 0.0 && noise_px.is_finite()) {
        return Err(LaneError::param("noise_px", "must be finite and >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (spec.width as f64, spec.height as f64);
    let vx = rng.random_range(0.4 * w..0.6 * w);
    let vy = rng.random_range(0.25 * h..0.4 * h);

    let (h1, h2, h4, h5) = (
        rng.random_range(0.8..1.25),
        rng.random_range(-0.2..0.2),
        rng.random_range(0.8..1.25),
        rng.random_range(-20.0..20.0),
    );
    // choose the ground-line slope, then the offset that produces it
    let slope = rng.random_range(-0.15..0.15);
    let h3 = slope * (h4 * vy + h5) - h1 * vx - h2 * vy;
    let homography_true = Homography::new([h1, h2, h3, h4, h5, -1.0 / vy])?;

    // bottom-row crossings with a minimum spacing, left to right
    let span = (0.1 * w, 0.9 * w);
    let gap =
        ((span.1 - span.0) / n_lanes as f64).min(0.6 * (span.1 - span.0) / (n_lanes - 1) as f64);
    let slack = (span.1 - span.0) - gap * (n_lanes - 1) as f64;
    let mut cuts: Vec<f64> = (0..n_lanes).map(|_| rng.random_range(0.0..slack)).collect();
    cuts.sort_by(f64::total_cmp);
    let bottoms: Vec<f64> = cuts
        .iter()
        .enumerate()
        .map(|(k, c)| span.0 + c + k as f64 * gap)
        .collect();

    let rows = spec.rows();
    let first = rows
        .iter()
        .position(|&y| y >= vy + HORIZON_MARGIN_PX)
        .unwrap_or(rows.len());
    let noise = Normal::new(0.0, noise_px.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut lanes = Vec::with_capacity(n_lanes);
    for xb in bottoms {
        let exact: Vec<f64> = rows
            .iter()
            .map(|&y| vx + (xb - vx) * (y - vy) / (h - vy))
            .collect();
        let inside = |i: usize| i >= first && exact[i] >= 0.0 && exact[i] <= w - 1.0;
        let valid: Vec<bool> = (0..rows.len()).map(inside).collect();
        let xs = exact
            .iter()
            .zip(&valid)
            .map(|(&x, &v)| {
                if !v {
                    return 0.0;
                }
                let n = if noise_px > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                (x + n).clamp(0.0, w - 1.0)
            })
            .collect();
        lanes.push(LanePolyline::new(xs, valid)?);
    }
    Ok(SyntheticScene {
        homography_true,
        lanes,
        vp_true: VanishingPoint::new(vx, vy),
        seed,
        noise_px,
    })
}
