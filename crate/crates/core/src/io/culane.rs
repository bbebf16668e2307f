use std::fmt::Write as _;

use log::warn;

use crate::error::{LaneError, Result};
use crate::geometry::Point2;
use crate::repr::{ImageSpec, LanePolyline};

/// Resamples an arbitrary point list onto the spec's row grid by linear
/// interpolation in `y`. Rows outside the points' `y` span are invalid.
///
/// Returns `None` when fewer than two grid rows are covered.
pub fn resample_to_grid(points: &[Point2], rows: &[f64]) -> Option<LanePolyline> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.y.total_cmp(&b.y));
    pts.dedup_by(|b, a| a.y == b.y);
    if pts.len() < 2 {
        return None;
    }
    let (lo, hi) = (pts[0].y, pts[pts.len() - 1].y);
    let mut xs = vec![0.0; rows.len()];
    let mut valid = vec![false; rows.len()];
    let mut seg = 0;
    for (i, &y) in rows.iter().enumerate() {
        if y < lo || y > hi {
            continue;
        }
        while seg + 2 < pts.len() && pts[seg + 1].y < y {
            seg += 1;
        }
        let (a, b) = (pts[seg], pts[seg + 1]);
        let t = (y - a.y) / (b.y - a.y);
        xs[i] = a.x + t.clamp(0.0, 1.0) * (b.x - a.x);
        valid[i] = true;
    }
    LanePolyline::new(xs, valid).ok()
}

/// Parses CULane `.lines.txt` text: one lane per line, alternating `x y`
/// values. Points with negative `x` mark absent samples and are dropped.
/// Lanes covering fewer than two grid rows are skipped with a warning.
pub fn parse_culane(text: &str, spec: &ImageSpec) -> Result<Vec<LanePolyline>> {
    let rows = spec.rows();
    let mut lanes = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let vals = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| LaneError::Parse {
                        line: line_no,
                        message: format!("`{t}` is not a number"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.is_empty() {
            continue;
        }
        if vals.len() % 2 != 0 {
            return Err(LaneError::Parse {
                line: line_no,
                message: format!("odd number of values ({})", vals.len()),
            });
        }
        let pts: Vec<Point2> = vals
            .chunks(2)
            .map(|c| Point2::new(c[0], c[1]))
            .filter(|p| p.x >= 0.0)
            .collect();
        match resample_to_grid(&pts, &rows) {
            Some(l) => lanes.push(l),
            None => warn!("line {line_no}: lane covers fewer than two grid rows, skipped"),
        }
    }
    Ok(lanes)
}

/// Writes lanes in CULane layout, bottom point first, three decimals.
pub fn serialize_culane(lanes: &[LanePolyline], spec: &ImageSpec) -> String {
    let rows = spec.rows();
    let mut out = String::new();
    for lane in lanes {
        let mut first = true;
        for p in lane.points(&rows).iter().rev() {
            if !first {
                out.push(' ');
            }
            first = false;
            write!(out, "{:.3} {:.3}", p.x, p.y).expect("string write");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn culane_spec() -> ImageSpec {
        ImageSpec::new(590, 1640, 60).unwrap()
    }

    #[test]
    fn vertical_three_points() {
        let spec = ImageSpec::new(590, 1640, 60).unwrap();
        let lanes = parse_culane("100 590 100 580 100 570\n", &spec).unwrap();
        assert_eq!(lanes.len(), 1);
        let rows = spec.rows();
        let l = &lanes[0];
        // rows of the grid inside [570, 590]: spacing is 10 px
        let expect: Vec<usize> = (0..rows.len())
            .filter(|&i| rows[i] >= 570.0 && rows[i] <= 590.0)
            .collect();
        assert_eq!(l.valid_range().collect::<Vec<_>>(), expect);
        assert!(l.points(&rows).iter().all(|p| p.x == 100.0));
    }

    #[test]
    fn empty_text() {
        assert!(parse_culane("", &culane_spec()).unwrap().is_empty());
        assert!(parse_culane("\n  \n", &culane_spec()).unwrap().is_empty());
    }

    #[test]
    fn negative_markers_and_short_lanes() {
        let text = "-2 590 -2 580 300 570 310 560 320 550\n5 100\n";
        let lanes = parse_culane(text, &culane_spec()).unwrap();
        assert_eq!(lanes.len(), 1);
        assert_eq!(lanes[0].valid_count(), 3);
    }

    #[test]
    fn errors_name_the_line() {
        match parse_culane("1 2 3 4\n1 2 3\n", &culane_spec()) {
            Err(LaneError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_culane("1 x\n", &culane_spec()),
            Err(LaneError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn round_trip() {
        let spec = culane_spec();
        let lane = LanePolyline::from_fn(&spec, 20..60, |y| 800.0 + 0.4123 * y).unwrap();
        let text = serialize_culane(std::slice::from_ref(&lane), &spec);
        let back = parse_culane(&text, &spec).unwrap();
        assert_eq!(back[0].valid(), lane.valid());
        for (a, b) in back[0].xs().iter().zip(lane.xs()) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}
