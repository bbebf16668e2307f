use serde::{Deserialize, Serialize};

use crate::error::{LaneError, Result};
use crate::geometry::Point2;

/// Bird's-eye line `a x + b y + c = 0`, `a^2 + b^2 = 1`, `a >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevLine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl BevLine {
    /// Normalizes arbitrary coefficients.
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let n = a.hypot(b);
        if !(n > 0.0) || !n.is_finite() {
            return Err(LaneError::DegenerateInput("a = b = 0".to_string()));
        }
        let s = if a < 0.0 || (a == 0.0 && b < 0.0) {
            -1.0 / n
        } else {
            1.0 / n
        };
        Ok(Self {
            a: a * s + 0.0,
            b: b * s + 0.0,
            c: c * s + 0.0,
        })
    }
}

/// Total-least-squares fit together with the derivative of the fitted
/// direction angle with respect to every input point.
#[derive(Debug, Clone, PartialEq)]
pub struct BevFit {
    pub line: BevLine,
    /// Angle of the principal direction, radians.
    pub phi: f64,
    /// `(d phi / d x_k, d phi / d y_k)` per input point.
    pub dphi: Vec<[f64; 2]>,
    /// `(d a / d phi, d b / d phi)` for the normalized line.
    pub dab_dphi: [f64; 2],
}

/// Orthogonal-regression line through `pts`.
pub fn fit_bev_line(pts: &[Point2]) -> Result<BevLine> {
    Ok(fit_bev_line_with_grad(pts)?.line)
}

pub fn fit_bev_line_with_grad(pts: &[Point2]) -> Result<BevFit> {
    if pts.len() < 2 {
        return Err(LaneError::DegenerateInput(format!(
            "need at least 2 points, got {}",
            pts.len()
        )));
    }
    if pts.iter().any(|p| !p.is_finite()) {
        return Err(LaneError::DegenerateInput("non-finite point".to_string()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let u = sxx - syy;
    let v = 2.0 * sxy;
    let r2 = u * u + v * v;
    let spread = sxx + syy;
    if !(r2 > (1e-12 * spread).powi(2)) || spread == 0.0 {
        return Err(LaneError::DegenerateInput(
            "points are coincident or have no dominant direction".to_string(),
        ));
    }
    let phi = 0.5 * v.atan2(u);
    let (s, c) = phi.sin_cos();
    // normal (-sin, cos), flipped so that a >= 0
    let sign = if -s < 0.0 || (s == 0.0 && c < 0.0) {
        -1.0
    } else {
        1.0
    };
    let (a, b) = (-s * sign + 0.0, c * sign + 0.0);
    let line = BevLine {
        a,
        b,
        c: -(a * mx + b * my) + 0.0,
    };
    let dphi = pts
        .iter()
        .map(|p| {
            let (dx, dy) = (p.x - mx, p.y - my);
            // du/dx = 2dx, du/dy = -2dy, dv/dx = 2dy, dv/dy = 2dx
            let gx = 0.5 * (u * 2.0 * dy - v * 2.0 * dx) / r2;
            let gy = 0.5 * (u * 2.0 * dx + v * 2.0 * dy) / r2;
            [gx, gy]
        })
        .collect();
    Ok(BevFit {
        line,
        phi,
        dphi,
        dab_dphi: [-c * sign, -s * sign],
    })
}

/// `|a1 b2 - a2 b1|`: zero iff the lines are parallel.
pub fn parallelism_residual(l1: &BevLine, l2: &BevLine) -> f64 {
    (l1.a * l2.b - l2.a * l1.b).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn vertical_points() {
        let l = fit_bev_line(&[
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(0.0, 2.0),
        ])
        .unwrap();
        assert_abs_diff_eq!(l.a, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l.b, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l.c, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn diagonal_points() {
        let pts: Vec<_> = (0..5).map(|i| Point2::new(i as f64, i as f64)).collect();
        let l = fit_bev_line(&pts).unwrap();
        let r = 0.5f64.sqrt();
        assert_abs_diff_eq!(l.a, r, epsilon = 1e-12);
        assert_abs_diff_eq!(l.b, -r, epsilon = 1e-12);
        assert_abs_diff_eq!(l.c, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn horizontal_line_has_positive_b() {
        let l = fit_bev_line(&[Point2::new(0.0, 3.0), Point2::new(5.0, 3.0)]).unwrap();
        assert_eq!((l.a, l.b), (0.0, 1.0));
        assert_abs_diff_eq!(l.c, -3.0, epsilon = 1e-12);
    }

    #[test]
    fn coincident_points_rejected() {
        assert!(fit_bev_line(&[Point2::new(1.0, 1.0), Point2::new(1.0, 1.0)]).is_err());
        assert!(fit_bev_line(&[Point2::new(1.0, 1.0)]).is_err());
    }

    #[test]
    fn residual_examples() {
        let l1 = BevLine::new(1.0, -1.0, 0.0).unwrap();
        let l2 = BevLine::new(2.0, -2.0, 5.0).unwrap();
        assert_abs_diff_eq!(parallelism_residual(&l1, &l2), 0.0, epsilon = 1e-15);
        let x = BevLine::new(1.0, 0.0, 0.0).unwrap();
        let y = BevLine::new(0.0, 1.0, 0.0).unwrap();
        assert_eq!(parallelism_residual(&x, &y), 1.0);
        let l3 = BevLine::new(0.3, 0.8, 1.0).unwrap();
        let neg = BevLine {
            a: -l3.a,
            b: -l3.b,
            c: -l3.c,
        };
        assert_eq!(
            parallelism_residual(&l1, &l3),
            parallelism_residual(&l3, &l1)
        );
        assert_eq!(
            parallelism_residual(&l1, &l3),
            parallelism_residual(&l1, &neg)
        );
    }

    #[test]
    fn angle_gradient_matches_differences() {
        let pts = vec![
            Point2::new(1.0, 0.0),
            Point2::new(2.5, 3.0),
            Point2::new(3.2, 6.1),
            Point2::new(5.0, 8.7),
        ];
        let fit = fit_bev_line_with_grad(&pts).unwrap();
        let h = 1e-6;
        for k in 0..pts.len() {
            for axis in 0..2 {
                let mut p = pts.clone();
                let mut m = pts.clone();
                if axis == 0 {
                    p[k].x += h;
                    m[k].x -= h;
                } else {
                    p[k].y += h;
                    m[k].y -= h;
                }
                let fd = (fit_bev_line_with_grad(&p).unwrap().phi
                    - fit_bev_line_with_grad(&m).unwrap().phi)
                    / (2.0 * h);
                assert_abs_diff_eq!(fit.dphi[k][axis], fd, epsilon = 1e-7);
            }
        }
    }
}
