use std::io::Write;

use serde::{Deserialize, Serialize};

use super::vp::VanishingPoint;
use crate::error::{LaneError, Result};
use crate::geometry::Point2;
use crate::repr::{CenterLineParams, ImageSpec};

/// Size of the anchor-origin window, its grid stride, and the angle step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnchorParams {
    /// Side of the square window centered on the VP, pixels.
    pub w_anchor: u32,
    /// Spacing of origin points inside the window, pixels.
    pub s_anchor: u32,
    /// Angle step, degrees.
    pub a_anchor: f64,
}

impl Default for AnchorParams {
    fn default() -> Self {
        Self {
            w_anchor: 40,
            s_anchor: 5,
            a_anchor: 5.0,
        }
    }
}

impl AnchorParams {
    pub fn validate(&self) -> Result<()> {
        if self.s_anchor == 0 {
            return Err(LaneError::param("s_anchor", "must be > 0"));
        }
        if !self.w_anchor.is_multiple_of(self.s_anchor) {
            return Err(LaneError::param(
                "w_anchor",
                format!(
                    "{} is not divisible by s_anchor = {}",
                    self.w_anchor, self.s_anchor
                ),
            ));
        }
        if !(self.a_anchor > 0.0 && self.a_anchor < 180.0) {
            return Err(LaneError::param("a_anchor", "must lie in (0, 180)"));
        }
        Ok(())
    }

    /// Origin offsets along one axis: `-w/2, -w/2 + s, ..., w/2`.
    pub fn offsets(&self) -> Vec<f64> {
        let n = self.w_anchor / self.s_anchor.max(1);
        (0..=n)
            .map(|k| -(self.w_anchor as f64) / 2.0 + (k * self.s_anchor) as f64)
            .collect()
    }

    /// Angles `a, 2a, ...` strictly inside `(0, 180)`.
    pub fn angles(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 1u32;
        loop {
            let t = k as f64 * self.a_anchor;
            if t >= 180.0 - 1e-9 {
                break;
            }
            out.push(t);
            k += 1;
        }
        out
    }
}

/// A straight lane proposal through an origin near the vanishing point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub origin: Point2,
    pub theta_deg: f64,
    pub line: CenterLineParams,
    /// Anchor `x` at every key-point row.
    pub sampled_xs: Vec<f64>,
    pub point_index: usize,
    pub angle_index: usize,
}

/// All anchors for one vanishing point, ordered by `(point_index, angle_index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub vp: VanishingPoint,
    pub params: AnchorParams,
    pub spec: ImageSpec,
    pub points: Vec<Point2>,
    pub angles: Vec<f64>,
    pub anchors: Vec<Anchor>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Writes `point_index,angle_deg,origin_x,origin_y,a,b,c` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "point_index",
            "angle_deg",
            "origin_x",
            "origin_y",
            "a",
            "b",
            "c",
        ])?;
        for a in &self.anchors {
            w.write_record([
                a.point_index.to_string(),
                a.theta_deg.to_string(),
                a.origin.x.to_string(),
                a.origin.y.to_string(),
                a.line.a.to_string(),
                a.line.b.to_string(),
                a.line.c.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Radiates anchors from a `(w/s + 1)^2` grid of origins centered on the VP,
/// one per angle step. Anchors span every row of the image.
pub fn generate_anchors(
    vp: &VanishingPoint,
    params: &AnchorParams,
    spec: &ImageSpec,
) -> Result<AnchorSet> {
    params.validate()?;
    spec.validate()?;
    let offsets = params.offsets();
    let angles = params.angles();
    let rows = spec.rows();

    let points: Vec<Point2> = offsets
        .iter()
        .flat_map(|&dy| offsets.iter().map(move |&dx| (dx, dy)))
        .map(|(dx, dy)| Point2::new(vp.x + dx, vp.y + dy))
        .collect();

    let mut anchors = Vec::with_capacity(points.len() * angles.len());
    for (point_index, &origin) in points.iter().enumerate() {
        for (angle_index, &theta) in angles.iter().enumerate() {
            let line = CenterLineParams::from_point_angle(origin, theta)?;
            let sampled_xs = rows.iter().map(|&y| line.x_at(y)).collect();
            anchors.push(Anchor {
                origin,
                theta_deg: theta,
                line,
                sampled_xs,
                point_index,
                angle_index,
            });
        }
    }
    Ok(AnchorSet {
        vp: *vp,
        params: *params,
        spec: *spec,
        points,
        angles,
        anchors,
    })
}
