//! Direct descent on the six homography parameters so that the projected
//! lanes become parallel in the bird's-eye view.

use log::debug;
use serde::{Deserialize, Serialize};

use super::terms::parallelism_loss;
use crate::error::{LaneError, Result};
use crate::geometry::Point2;
use crate::repr::{ImageSpec, LanePolyline};
use crate::structures::{fit_bev_line_with_grad, Homography, HORIZON_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomographyFitOptions {
    pub steps: usize,
    pub lr: f64,
    /// Stop once the loss falls below this.
    pub tol: f64,
    /// Lower bound on `|det H|`; steps that cross it are rejected.
    pub min_det: f64,
    /// Consecutive loss increases tolerated before giving up.
    pub max_increases: usize,
}

impl Default for HomographyFitOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 1e-3,
            tol: 1e-12,
            min_det: 1e-6,
            max_increases: 50,
        }
    }
}

impl HomographyFitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(LaneError::param("homography.lr", "must be finite and > 0"));
        }
        if !(self.tol >= 0.0) {
            return Err(LaneError::param("homography.tol", "must be >= 0"));
        }
        if !(self.min_det > 0.0) {
            return Err(LaneError::param("homography.min_det", "must be > 0"));
        }
        if self.max_increases == 0 {
            return Err(LaneError::param("homography.max_increases", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomographyFit {
    /// Best iterate seen.
    pub h: Homography,
    pub loss: f64,
    pub initial_loss: f64,
    pub steps: usize,
    /// Fewer than two lanes: nothing to fit, `h` is the initial guess.
    pub too_few_lanes: bool,
}

/// Gradient-descent fit with default tolerances; see [`optimize_homography_with`].
pub fn optimize_homography(
    lanes: &[LanePolyline],
    spec: &ImageSpec,
    init: Homography,
    steps: usize,
    lr: f64,
) -> Result<HomographyFit> {
    let opts = HomographyFitOptions {
        steps,
        lr,
        ..Default::default()
    };
    optimize_homography_with(lanes, spec, init, &opts)
}

/// Parallelism loss of `lanes` after projecting them through `h`.
pub fn parallelism_of_lanes(
    lanes: &[LanePolyline],
    spec: &ImageSpec,
    h: &Homography,
) -> Result<f64> {
    let pts = lane_points(lanes, spec);
    Ok(loss_and_grad(h, &pts)?.0)
}

fn lane_points(lanes: &[LanePolyline], spec: &ImageSpec) -> Vec<Vec<Point2>> {
    let rows = spec.rows();
    lanes.iter().map(|l| l.points(&rows)).collect()
}

/// Loss and its gradient with respect to `h.h`.
pub(crate) fn loss_and_grad(h: &Homography, lanes: &[Vec<Point2>]) -> Result<(f64, [f64; 6])> {
    let mut lines = Vec::with_capacity(lanes.len());
    let mut fits = Vec::with_capacity(lanes.len());
    for pts in lanes {
        let mut bev = Vec::with_capacity(pts.len());
        let mut jac = Vec::with_capacity(pts.len());
        for (index, &p) in pts.iter().enumerate() {
            let (q, j) = h
                .project_with_jacobian(p)
                .ok_or(LaneError::HorizonSingularity {
                    index,
                    w: h.w_at(p.y),
                })?;
            bev.push(q);
            jac.push(j);
        }
        let fit = fit_bev_line_with_grad(&bev)?;
        lines.push(fit.line);
        fits.push((fit, jac));
    }
    let lv = parallelism_loss(&lines);
    let mut grad = [0.0; 6];
    if let Some(g) = lv.gradient(super::keys::LINES) {
        for (i, (fit, jac)) in fits.iter().enumerate() {
            let dl_dphi = g[[i, 0]] * fit.dab_dphi[0] + g[[i, 1]] * fit.dab_dphi[1];
            if dl_dphi == 0.0 {
                continue;
            }
            for (d, j) in fit.dphi.iter().zip(jac) {
                for (p, gp) in grad.iter_mut().enumerate() {
                    *gp += dl_dphi * (d[0] * j[0][p] + d[1] * j[1][p]);
                }
            }
        }
    }
    Ok((lv.value, grad))
}

/// Per-parameter scales: the offsets live in pixels, `h6` in inverse pixels.
fn param_scales(spec: &ImageSpec) -> [f64; 6] {
    let (w, h) = (spec.width as f64, spec.height as f64);
    [1.0, 1.0, w, 1.0, h, 1.0 / h]
}

/// Preconditioned descent with step-size adaptation.
///
/// A step that would move any lane point across the horizon or push
/// `|det H|` under `min_det` is rejected and the step size halved. Steps that
/// raise the loss are taken but also halve the step size; `max_increases` of
/// those in a row is reported as divergence. The lowest-loss iterate is
/// returned.
pub fn optimize_homography_with(
    lanes: &[LanePolyline],
    spec: &ImageSpec,
    init: Homography,
    opts: &HomographyFitOptions,
) -> Result<HomographyFit> {
    opts.validate()?;
    spec.validate()?;
    if !(init.det().abs() > opts.min_det) {
        return Err(LaneError::SingularHomography(init.det().abs()));
    }
    if lanes.len() < 2 {
        return Ok(HomographyFit {
            h: init,
            loss: 0.0,
            initial_loss: 0.0,
            steps: 0,
            too_few_lanes: true,
        });
    }
    let pts = lane_points(lanes, spec);
    let side: Vec<Vec<f64>> = pts
        .iter()
        .map(|l| l.iter().map(|p| init.w_at(p.y).signum()).collect())
        .collect();
    let feasible = |h: &Homography| {
        h.det().abs() > opts.min_det
            && pts.iter().zip(&side).all(|(l, s)| {
                l.iter().zip(s).all(|(p, &s)| {
                    let w = h.w_at(p.y);
                    w * s > HORIZON_EPS
                })
            })
    };
    if !feasible(&init) {
        return Err(LaneError::HorizonSingularity { index: 0, w: 0.0 });
    }

    let scales = param_scales(spec);
    let (mut loss, mut grad) = loss_and_grad(&init, &pts)?;
    let initial_loss = loss;
    let mut cur = init;
    let mut best = (init, loss);
    let mut lr = opts.lr;
    let mut increases = 0;
    let mut taken = 0;
    for step in 0..opts.steps {
        if best.1 <= opts.tol {
            break;
        }
        taken = step + 1;
        let mut next = cur;
        for p in 0..6 {
            next.h[p] -= lr * scales[p] * scales[p] * grad[p];
        }
        if !feasible(&next) {
            lr *= 0.5;
            continue;
        }
        let (l, g) = loss_and_grad(&next, &pts)?;
        if !l.is_finite() {
            return Err(LaneError::DivergedOptimization { steps: taken });
        }
        if l > loss {
            increases += 1;
            lr *= 0.5;
            if increases >= opts.max_increases {
                return Err(LaneError::DivergedOptimization { steps: taken });
            }
        } else {
            increases = 0;
            lr *= 1.1;
        }
        cur = next;
        loss = l;
        grad = g;
        if loss < best.1 {
            best = (cur, loss);
        }
    }
    debug!(
        "homography fit: loss {initial_loss:.3e} -> {:.3e} in {taken} steps",
        best.1
    );
    Ok(HomographyFit {
        h: best.0,
        loss: best.1,
        initial_loss,
        steps: taken,
        too_few_lanes: false,
    })
}
