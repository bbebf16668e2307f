//! Box-line lane representation.
//!
//! A lane is sampled at `P` equally spaced rows `y_i = H / (P - 1) * i`. Its
//! key points are enclosed by the minimum-area rectangle; the rectangle's long
//! axis through its center is the lane's *center line* `a x + b y + c = 0`,
//! and the lane itself is stored as the per-row horizontal offsets from that
//! line.

use serde::{Deserialize, Serialize};

use crate::error::{LaneError, Result};
use crate::geometry::{convex_hull, Point2};

/// Image dimensions and the number of key-point rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageSpec {
    pub height: u32,
    pub width: u32,
    pub key_points: usize,
}

impl Default for ImageSpec {
    fn default() -> Self {
        Self {
            height: 360,
            width: 640,
            key_points: 72,
        }
    }
}

impl ImageSpec {
    pub fn new(height: u32, width: u32, key_points: usize) -> Result<Self> {
        let spec = Self {
            height,
            width,
            key_points,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 {
            return Err(LaneError::param("height", "must be > 0"));
        }
        if self.width == 0 {
            return Err(LaneError::param("width", "must be > 0"));
        }
        if self.key_points < 2 {
            return Err(LaneError::param("key_points", "must be >= 2"));
        }
        Ok(())
    }

    pub fn row_y(&self, i: usize) -> f64 {
        self.height as f64 / (self.key_points - 1) as f64 * i as f64
    }

    /// The `P` row coordinates, top to bottom.
    pub fn rows(&self) -> Vec<f64> {
        (0..self.key_points).map(|i| self.row_y(i)).collect()
    }
}

/// A lane sampled on a fixed row grid.
///
/// `xs[i]` is meaningful only where `valid[i]`; the valid rows form a single
/// contiguous run of at least two rows. Invalid entries hold `0.0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLane")]
pub struct LanePolyline {
    xs: Vec<f64>,
    valid: Vec<bool>,
}

#[derive(Deserialize)]
struct RawLane {
    xs: Vec<f64>,
    valid: Vec<bool>,
}

impl TryFrom<RawLane> for LanePolyline {
    type Error = LaneError;
    fn try_from(raw: RawLane) -> Result<Self> {
        LanePolyline::new(raw.xs, raw.valid)
    }
}

impl LanePolyline {
    pub fn new(mut xs: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if xs.len() != valid.len() {
            return Err(LaneError::ShapeMismatch(format!(
                "lane has {} xs but {} mask entries",
                xs.len(),
                valid.len()
            )));
        }
        let first = valid.iter().position(|&v| v);
        let last = valid.iter().rposition(|&v| v);
        let (first, last) = match (first, last) {
            (Some(f), Some(l)) if l > f => (f, l),
            _ => {
                return Err(LaneError::InvalidLane(
                    "fewer than two valid rows".to_string(),
                ))
            }
        };
        if valid[first..=last].iter().any(|&v| !v) {
            return Err(LaneError::InvalidLane(
                "valid rows are not contiguous".to_string(),
            ));
        }
        for (x, &v) in xs.iter_mut().zip(&valid) {
            if v && !x.is_finite() {
                return Err(LaneError::InvalidLane(format!("non-finite x {x}")));
            }
            if !v {
                *x = 0.0;
            }
        }
        Ok(Self { xs, valid })
    }

    /// Builds a lane valid on `range`, with `x = f(y)` on the spec's row grid.
    pub fn from_fn(
        spec: &ImageSpec,
        range: std::ops::Range<usize>,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let rows = spec.rows();
        let valid: Vec<bool> = (0..spec.key_points).map(|i| range.contains(&i)).collect();
        let xs = rows
            .iter()
            .zip(&valid)
            .map(|(&y, &v)| if v { f(y) } else { 0.0 })
            .collect();
        Self::new(xs, valid)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Index range of the contiguous valid run.
    pub fn valid_range(&self) -> std::ops::Range<usize> {
        let first = self.valid.iter().position(|&v| v).unwrap_or(0);
        first..first + self.valid_count()
    }

    /// Valid key points, top to bottom, given the row coordinates.
    pub fn points(&self, rows: &[f64]) -> Vec<Point2> {
        self.valid_range()
            .map(|i| Point2::new(self.xs[i], rows[i]))
            .collect()
    }
}

/// Normalized center line `a x + b y + c = 0` with `a^2 + b^2 = 1`, `a > 0`.
///
/// `theta_deg` is the direction angle measured clockwise (in image
/// coordinates, y down) from the positive x axis, in `(0, 180)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterLineParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub theta_deg: f64,
}

const HORIZONTAL_EPS: f64 = 1e-12;

impl CenterLineParams {
    /// Line through `point` with direction `dir`. Rejects horizontal lines.
    pub fn from_direction(point: Point2, dir: Point2) -> Result<Self> {
        let n = dir.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(LaneError::DegenerateInput("zero direction".to_string()));
        }
        let mut d = dir * (1.0 / n);
        if d.y < 0.0 {
            d = d * -1.0;
        }
        if d.y <= HORIZONTAL_EPS {
            return Err(LaneError::CollinearHorizontal);
        }
        let (a, b) = (d.y, -d.x);
        Ok(Self {
            a,
            b,
            c: -(a * point.x + b * point.y),
            theta_deg: d.y.atan2(d.x).to_degrees(),
        })
    }

    /// Line through `point` at `theta_deg` degrees.
    pub fn from_point_angle(point: Point2, theta_deg: f64) -> Result<Self> {
        let (s, c) = sin_cos_deg(theta_deg);
        let mut line = Self::from_direction(point, Point2::new(c, s))?;
        // keep the caller's angle verbatim rather than the atan2 round trip
        line.theta_deg = theta_deg.rem_euclid(180.0);
        Ok(line)
    }

    /// `x` on the line at row `y`.
    pub fn x_at(&self, y: f64) -> f64 {
        (-self.c - self.b * y) / self.a
    }

    /// Signed distance of `p` to the line.
    pub fn signed_distance(&self, p: Point2) -> f64 {
        self.a * p.x + self.b * p.y + self.c
    }

    pub fn intersect(&self, other: &CenterLineParams) -> Option<Point2> {
        intersect_lines((self.a, self.b, self.c), (other.a, other.b, other.c), 0.0)
    }
}

/// Intersection of `a1 x + b1 y + c1 = 0` and `a2 x + b2 y + c2 = 0`, or `None`
/// when `|a1 b2 - a2 b1| <= eps`.
pub fn intersect_lines(l1: (f64, f64, f64), l2: (f64, f64, f64), eps: f64) -> Option<Point2> {
    let det = l1.0 * l2.1 - l2.0 * l1.1;
    if det.abs() <= eps || det == 0.0 {
        return None;
    }
    Some(Point2::new(
        (l1.1 * l2.2 - l2.1 * l1.2) / det,
        (l1.2 * l2.0 - l2.2 * l1.0) / det,
    ))
}

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90.
pub fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let r = deg.rem_euclid(360.0);
    if r == 0.0 {
        (0.0, 1.0)
    } else if r == 90.0 {
        (1.0, 0.0)
    } else if r == 180.0 {
        (0.0, -1.0)
    } else if r == 270.0 {
        (-1.0, 0.0)
    } else {
        r.to_radians().sin_cos()
    }
}

/// Minimum-area enclosing rectangle of a point set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinAreaRect {
    /// Long side length (`h`).
    pub long_side: f64,
    /// Short side length (`w`).
    pub short_side: f64,
    /// Angle of the long side in `(0, 180)`.
    pub theta_deg: f64,
    pub center: Point2,
    /// Unit vector along the long side, pointing down the image.
    pub direction: Point2,
}

impl MinAreaRect {
    pub fn area(&self) -> f64 {
        self.long_side * self.short_side
    }

    /// Corners in order around the rectangle.
    pub fn corners(&self) -> [Point2; 4] {
        let u = self.direction * (self.long_side / 2.0);
        let v = Point2::new(-self.direction.y, self.direction.x) * (self.short_side / 2.0);
        let c = self.center;
        [c - u - v, c + u - v, c + u + v, c - u + v]
    }

    /// Whether `p` lies inside the rectangle inflated by `tol`.
    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        let d = p - self.center;
        let v = Point2::new(-self.direction.y, self.direction.x);
        d.dot(self.direction).abs() <= self.long_side / 2.0 + tol
            && d.dot(v).abs() <= self.short_side / 2.0 + tol
    }
}

/// Folds a direction so it points down the image (or right when horizontal),
/// returning the unit vector and its angle in `[0, 180)`.
fn fold_direction(d: Point2) -> (Point2, f64) {
    let n = d.norm();
    let mut u = d * (1.0 / n);
    if u.y < 0.0 || (u.y == 0.0 && u.x < 0.0) {
        u = u * -1.0;
    }
    let mut theta = u.y.atan2(u.x).to_degrees();
    if theta >= 180.0 {
        theta -= 180.0;
    }
    (u, theta)
}

struct Candidate {
    area: f64,
    theta: f64,
    horizontal: bool,
    rect: MinAreaRect,
}

impl Candidate {
    fn new(origin: Point2, u: Point2, min_u: f64, max_u: f64, max_v: f64) -> Self {
        let v = Point2::new(-u.y, u.x);
        let center = origin + u * ((min_u + max_u) / 2.0) + v * (max_v / 2.0);
        let (len_u, len_v) = (max_u - min_u, max_v);
        let (long_dir, long_side, short_side) = if len_u >= len_v {
            (u, len_u, len_v)
        } else {
            (v, len_v, len_u)
        };
        let (direction, theta) = fold_direction(long_dir);
        Self {
            area: long_side * short_side,
            theta,
            horizontal: direction.y.abs() <= HORIZONTAL_EPS,
            rect: MinAreaRect {
                long_side,
                short_side,
                theta_deg: theta,
                center,
                direction,
            },
        }
    }

    /// Smaller area wins; near-equal areas prefer non-horizontal, then smaller theta.
    fn better_than(&self, other: &Candidate) -> bool {
        let tol = 1e-9 * other.area.abs().max(1.0);
        if self.area < other.area - tol {
            return true;
        }
        if self.area > other.area + tol {
            return false;
        }
        (self.horizontal, self.theta) < (other.horizontal, other.theta)
    }
}

/// Minimum-area enclosing rectangle by convex hull and rotating calipers.
///
/// Errors with [`LaneError::DegenerateInput`] when all points coincide and
/// with [`LaneError::CollinearHorizontal`] when the long side is horizontal.
pub fn min_circumscribed_rect(points: &[Point2]) -> Result<MinAreaRect> {
    if points.iter().any(|p| !p.is_finite()) {
        return Err(LaneError::DegenerateInput("non-finite point".to_string()));
    }
    let hull = convex_hull(points);
    let best = match hull.len() {
        0 | 1 => {
            return Err(LaneError::DegenerateInput(
                "need at least two distinct points".to_string(),
            ))
        }
        2 => {
            let d = hull[1] - hull[0];
            let u = d * (1.0 / d.norm());
            Candidate::new(hull[0], u, 0.0, d.norm(), 0.0)
        }
        _ => calipers(&hull),
    };
    if best.horizontal {
        return Err(LaneError::CollinearHorizontal);
    }
    Ok(best.rect)
}

fn calipers(hull: &[Point2]) -> Candidate {
    let n = hull.len();
    let at = |i: usize| hull[i % n];
    let mut best: Option<Candidate> = None;
    // far-along-edge, far-from-edge and far-behind-edge pointers
    let (mut j, mut k, mut m) = (1usize, 1usize, 1usize);
    for i in 0..n {
        let p = at(i);
        let e = at(i + 1) - p;
        let u = e * (1.0 / e.norm());
        let v = Point2::new(-u.y, u.x);
        let pu = |q: Point2| (q - p).dot(u);
        let pv = |q: Point2| (q - p).dot(v);

        if i == 0 {
            j = 1;
        }
        j = j.max(i + 1);
        let mut guard = 0;
        while pu(at(j + 1)) > pu(at(j)) && guard < n {
            j += 1;
            guard += 1;
        }
        if i == 0 {
            k = j;
        }
        k = k.max(j);
        guard = 0;
        while pv(at(k + 1)) > pv(at(k)) && guard < n {
            k += 1;
            guard += 1;
        }
        if i == 0 {
            m = k;
        }
        m = m.max(k);
        guard = 0;
        while pu(at(m + 1)) < pu(at(m)) && guard < n {
            m += 1;
            guard += 1;
        }

        let cand = Candidate::new(p, u, pu(at(m)).min(0.0), pu(at(j)), pv(at(k)));
        if best.as_ref().is_none_or(|b| cand.better_than(b)) {
            best = Some(cand);
        }
    }
    best.expect("hull has at least three edges")
}

/// A lane encoded as its center line, enclosing rectangle and row offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxLineCode {
    pub center: CenterLineParams,
    pub rect_h: f64,
    pub rect_w: f64,
    /// Offset from the center line per row; `0.0` on invalid rows.
    pub dx: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Encodes a lane sampled on `spec`'s row grid.
pub fn encode(lane: &LanePolyline, spec: &ImageSpec) -> Result<BoxLineCode> {
    encode_on_rows(lane, &spec.rows())
}

/// Encodes a lane sampled on an explicit row grid.
pub fn encode_on_rows(lane: &LanePolyline, rows: &[f64]) -> Result<BoxLineCode> {
    if rows.len() != lane.len() {
        return Err(LaneError::ShapeMismatch(format!(
            "lane has {} rows, grid has {}",
            lane.len(),
            rows.len()
        )));
    }
    let rect = min_circumscribed_rect(&lane.points(rows))?;
    let center = CenterLineParams::from_direction(rect.center, rect.direction)?;
    let dx = lane
        .xs()
        .iter()
        .zip(lane.valid())
        .zip(rows)
        .map(|((&x, &v), &y)| if v { x - center.x_at(y) } else { 0.0 })
        .collect();
    Ok(BoxLineCode {
        center,
        rect_h: rect.long_side,
        rect_w: rect.short_side,
        dx,
        valid: lane.valid().to_vec(),
    })
}

/// Decodes back to key points: `x_i = (-c - b y_i) / a + dx_i` on valid rows.
pub fn decode(code: &BoxLineCode, spec: &ImageSpec) -> Result<LanePolyline> {
    decode_on_rows(code, &spec.rows())
}

pub fn decode_on_rows(code: &BoxLineCode, rows: &[f64]) -> Result<LanePolyline> {
    if code.dx.len() != rows.len() || code.valid.len() != rows.len() {
        return Err(LaneError::ShapeMismatch(format!(
            "code has {} offsets, grid has {} rows",
            code.dx.len(),
            rows.len()
        )));
    }
    let xs = rows
        .iter()
        .zip(&code.dx)
        .zip(&code.valid)
        .map(|((&y, &d), &v)| if v { code.center.x_at(y) + d } else { 0.0 })
        .collect();
    LanePolyline::new(xs, code.valid.clone())
}
