use serde::{Deserialize, Serialize};

use crate::error::{LaneError, Result};
use crate::geometry::Point2;

/// Points closer than this to the horizon (in the homogeneous coordinate) are rejected.
pub const HORIZON_EPS: f64 = 1e-9;
pub const SINGULAR_EPS: f64 = 1e-12;

/// Image-to-bird's-eye homography with the six-parameter IPM structure
///
/// ```text
/// [ h1 h2 h3 ]
/// [ 0  h4 h5 ]
/// [ 0  h6 1  ]
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    pub h: [f64; 6],
}

impl Default for Homography {
    fn default() -> Self {
        Self::identity()
    }
}

impl Homography {
    pub const fn identity() -> Self {
        Self {
            h: [1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        }
    }

    pub fn new(h: [f64; 6]) -> Result<Self> {
        let out = Self { h };
        let det = out.det();
        if !(det.abs() > SINGULAR_EPS) {
            return Err(LaneError::SingularHomography(det.abs()));
        }
        Ok(out)
    }

    /// Identity with the horizon (the row mapped to infinity) at `y`.
    pub fn with_horizon(y: f64) -> Self {
        Self {
            h: [1.0, 0.0, 0.0, 1.0, 0.0, -1.0 / y],
        }
    }

    /// Image row mapped to infinity, if any.
    pub fn horizon_row(&self) -> Option<f64> {
        (self.h[5] != 0.0).then(|| -1.0 / self.h[5])
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let [h1, h2, h3, h4, h5, h6] = self.h;
        [[h1, h2, h3], [0.0, h4, h5], [0.0, h6, 1.0]]
    }

    /// Reads a matrix with the IPM zero pattern, normalizing the corner to 1.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self> {
        let tol = 1e-12 * m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        if m[1][0].abs() > tol || m[2][0].abs() > tol {
            return Err(LaneError::DegenerateInput(
                "matrix does not have the IPM zero pattern".to_string(),
            ));
        }
        let k = m[2][2];
        if k.abs() <= SINGULAR_EPS {
            return Err(LaneError::SingularHomography(0.0));
        }
        Self::new([
            m[0][0] / k,
            m[0][1] / k,
            m[0][2] / k,
            m[1][1] / k,
            m[1][2] / k,
            m[2][1] / k,
        ])
    }

    pub fn det(&self) -> f64 {
        let [h1, _, _, h4, h5, h6] = self.h;
        h1 * (h4 - h5 * h6)
    }

    /// `self * first`: apply `first`, then `self`.
    pub fn compose(&self, first: &Homography) -> Result<Homography> {
        let a = self.matrix();
        let b = first.matrix();
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        Self::from_matrix(m)
    }

    pub fn inverse(&self) -> Result<Homography> {
        let [h1, h2, h3, h4, h5, h6] = self.h;
        let d = h4 - h5 * h6;
        if h1.abs() <= SINGULAR_EPS || d.abs() <= SINGULAR_EPS {
            return Err(LaneError::SingularHomography(self.det().abs()));
        }
        // block inverse of [[h1, r], [0, B]] with B = [[h4, h5], [h6, 1]]
        let bi = [[1.0 / d, -h5 / d], [-h6 / d, h4 / d]];
        let r0 = -(h2 * bi[0][0] + h3 * bi[1][0]) / h1;
        let r1 = -(h2 * bi[0][1] + h3 * bi[1][1]) / h1;
        Self::from_matrix([
            [1.0 / h1, r0, r1],
            [0.0, bi[0][0], bi[0][1]],
            [0.0, bi[1][0], bi[1][1]],
        ])
    }

    /// Homogeneous scale `w = h6 y + 1` for an image row.
    pub fn w_at(&self, y: f64) -> f64 {
        self.h[5] * y + 1.0
    }

    pub fn project_point(&self, p: Point2) -> Option<Point2> {
        let [h1, h2, h3, h4, h5, _] = self.h;
        let w = self.w_at(p.y);
        if w.abs() <= HORIZON_EPS {
            return None;
        }
        Some(Point2::new(
            (h1 * p.x + h2 * p.y + h3) / w,
            (h4 * p.y + h5) / w,
        ))
    }

    /// Projects image points to the bird's-eye view.
    pub fn project(&self, pts: &[Point2]) -> Result<Vec<Point2>> {
        pts.iter()
            .enumerate()
            .map(|(index, &p)| {
                self.project_point(p).ok_or(LaneError::HorizonSingularity {
                    index,
                    w: self.w_at(p.y),
                })
            })
            .collect()
    }

    /// Projection of `p` and its derivatives with respect to the six parameters.
    pub fn project_with_jacobian(&self, p: Point2) -> Option<(Point2, [[f64; 6]; 2])> {
        let q = self.project_point(p)?;
        let w = self.w_at(p.y);
        let (x, y) = (p.x, p.y);
        let jx = [x / w, y / w, 1.0 / w, 0.0, 0.0, -q.x * y / w];
        let jy = [0.0, 0.0, 0.0, y / w, 1.0 / w, -q.y * y / w];
        Some((q, [jx, jy]))
    }

    /// Derivative of the projected point with respect to the image `x`.
    pub fn d_project_dx(&self, p: Point2) -> Point2 {
        Point2::new(self.h[0] / self.w_at(p.y), 0.0)
    }
}
