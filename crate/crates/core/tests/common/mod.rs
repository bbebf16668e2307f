//! Generators and brute-force oracles shared by the integration tests and the
//! acceptance suite. Nothing here calls into the code under test except for
//! constructing inputs.
#![allow(dead_code)]

use lane_core::anchoring::ScoredProposal;
use lane_core::geometry::Point2;
use lane_core::repr::{ImageSpec, LanePolyline};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random lane on `spec`'s grid: a contiguous run of at least two rows with
/// `x` a gentle cubic in `y`, so the long axis is never horizontal.
pub fn random_lane(rng: &mut impl Rng, spec: &ImageSpec) -> LanePolyline {
    let p = spec.key_points;
    let len = rng.random_range(2..=p);
    let start = rng.random_range(0..=p - len);
    let (h, w) = (spec.height as f64, spec.width as f64);
    let x0 = rng.random_range(0.1 * w..0.9 * w);
    let slope = rng.random_range(-1.5..1.5);
    let c2 = rng.random_range(-1e-3..1e-3);
    let c3 = rng.random_range(-2e-6..2e-6);
    let y0 = h / 2.0;
    LanePolyline::from_fn(spec, start..start + len, |y| {
        let t = y - y0;
        x0 + slope * t + c2 * t * t + c3 * t * t * t
    })
    .expect("generated lane is valid")
}

/// Random straight-ish lane spanning most of the image, well inside it.
pub fn random_long_lane(rng: &mut impl Rng, spec: &ImageSpec) -> LanePolyline {
    let p = spec.key_points;
    let start = rng.random_range(p / 4..p / 2);
    let (h, w) = (spec.height as f64, spec.width as f64);
    let x_bottom = rng.random_range(0.2 * w..0.8 * w);
    let slope = rng.random_range(-0.8..0.8);
    let c2 = rng.random_range(-5e-4..5e-4);
    LanePolyline::from_fn(spec, start..p, |y| {
        let t = h - y;
        x_bottom + slope * t + c2 * t * t
    })
    .expect("generated lane is valid")
}

/// Smallest bounding-box area over directions `0, step, 2 step, ... < 180` degrees.
pub fn sweep_min_area(points: &[Point2], step_deg: f64) -> f64 {
    let n = (180.0 / step_deg).round() as usize;
    let mut best = f64::INFINITY;
    for k in 0..n {
        let (s, c) = (k as f64 * step_deg).to_radians().sin_cos();
        let (mut u0, mut u1, mut v0, mut v1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in points {
            let u = c * p.x + s * p.y;
            let v = -s * p.x + c * p.y;
            u0 = u0.min(u);
            u1 = u1.max(u);
            v0 = v0.min(v);
            v1 = v1.max(v);
        }
        best = best.min((u1 - u0) * (v1 - v0));
    }
    best
}

/// Pixels covered by a lane drawn `width_px` wide, found by stamping a disc
/// at samples every 0.05 px along the polyline.
pub fn brute_pixels(lane: &LanePolyline, spec: &ImageSpec, width_px: f64) -> Vec<bool> {
    let (w, h) = (spec.width as i64, spec.height as i64);
    let mut mask = vec![false; (w * h) as usize];
    let pts = lane.points(&spec.rows());
    let r = width_px / 2.0;
    let mut stamp = |cx: f64, cy: f64| {
        let (x0, x1) = ((cx - r - 1.0).floor() as i64, (cx + r + 1.0).ceil() as i64);
        let (y0, y1) = ((cy - r - 1.0).floor() as i64, (cy + r + 1.0).ceil() as i64);
        for py in y0.max(0)..=y1.min(h - 1) {
            for px in x0.max(0)..=x1.min(w - 1) {
                let (dx, dy) = (px as f64 + 0.5 - cx, py as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= r * r {
                    mask[(py * w + px) as usize] = true;
                }
            }
        }
    };
    for seg in pts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let n = ((b.x - a.x).hypot(b.y - a.y) / 0.05).ceil().max(1.0) as usize;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            stamp(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        }
    }
    mask
}

pub fn brute_iou(a: &LanePolyline, b: &LanePolyline, spec: &ImageSpec, width_px: f64) -> f64 {
    let (ma, mb) = (
        brute_pixels(a, spec, width_px),
        brute_pixels(b, spec, width_px),
    );
    let inter = ma.iter().zip(&mb).filter(|(x, y)| **x && **y).count();
    let union = ma.iter().zip(&mb).filter(|(x, y)| **x || **y).count();
    inter as f64 / union as f64
}

/// Largest number of disjoint `(pred, gt)` pairs with IoU at or above
/// `thresh`, by trying every partial assignment.
pub fn exhaustive_matching(ious: &[Vec<f64>], thresh: f64) -> usize {
    fn go(i: usize, ious: &[Vec<f64>], used: &mut Vec<bool>, thresh: f64) -> usize {
        if i == ious.len() {
            return 0;
        }
        let mut best = go(i + 1, ious, used, thresh);
        for j in 0..used.len() {
            if !used[j] && ious[i][j] >= thresh {
                used[j] = true;
                best = best.max(1 + go(i + 1, ious, used, thresh));
                used[j] = false;
            }
        }
        best
    }
    let cols = ious.first().map_or(0, |r| r.len());
    go(0, ious, &mut vec![false; cols], thresh)
}

/// Random proposals: a few base lanes plus jittered copies, random confidences.
pub fn random_proposals(rng: &mut impl Rng, n: usize, p: usize) -> Vec<ScoredProposal> {
    let bases: Vec<(f64, f64)> = (0..rng.random_range(1..5))
        .map(|_| (rng.random_range(50.0..600.0), rng.random_range(-2.0..2.0)))
        .collect();
    (0..n)
        .map(|_| {
            let (x0, slope) = bases[rng.random_range(0..bases.len())];
            let jitter = rng.random_range(-25.0..25.0);
            let len = rng.random_range(2..=p);
            let start = rng.random_range(0..=p - len);
            let valid: Vec<bool> = (0..p).map(|i| (start..start + len).contains(&i)).collect();
            let xs = (0..p)
                .map(|i| {
                    if valid[i] {
                        x0 + jitter + slope * i as f64
                    } else {
                        0.0
                    }
                })
                .collect();
            // Quantized so that ties occur.
            let conf = (rng.random_range(0.0..1.0f64) * 20.0).round() / 20.0;
            ScoredProposal::new(conf, xs, valid).expect("valid proposal")
        })
        .collect()
}
