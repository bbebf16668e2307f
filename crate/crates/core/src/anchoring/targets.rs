use ndarray::Array2;

use super::anchors::{Anchor, AnchorSet};
use crate::error::{LaneError, Result};
use crate::repr::{BoxLineCode, LanePolyline};

/// Training targets for every anchor of an [`AnchorSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorTargets {
    /// Positive (assigned) anchors.
    pub gconf: Vec<bool>,
    /// `gt.x - anchor.x` per anchor and row; zero where `valid` is false.
    pub gdx: Array2<f64>,
    pub valid: Array2<bool>,
    /// Number of valid rows, counted up from the bottom-most valid row.
    pub len: Vec<usize>,
    /// Ground-truth lane served by each positive anchor.
    pub gt_index: Vec<Option<usize>>,
}

impl AnchorTargets {
    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.gconf
            .iter()
            .enumerate()
            .filter_map(|(i, &g)| g.then_some(i))
    }

    pub fn positive_count(&self) -> usize {
        self.gconf.iter().filter(|&&g| g).count()
    }
}

/// Mean `|anchor.x - lane.x|` over the lane's valid rows.
pub fn assignment_cost(anchor: &Anchor, lane: &LanePolyline) -> f64 {
    let range = lane.valid_range();
    let n = range.len() as f64;
    range
        .map(|i| (anchor.sampled_xs[i] - lane.xs()[i]).abs())
        .sum::<f64>()
        / n
}

/// Assigns each ground-truth lane to its cheapest free anchor.
///
/// Pairs are visited in order of increasing cost (ties by anchor index, then
/// lane index); a pair is taken when both its lane and its anchor are free.
/// A lane that loses its best anchor to a cheaper lane falls through to its
/// next-best free anchor.
pub fn assign_targets(
    anchors: &AnchorSet,
    gt: &[(BoxLineCode, LanePolyline)],
) -> Result<AnchorTargets> {
    if anchors.is_empty() {
        return Err(LaneError::DegenerateInput(
            "anchor set is empty".to_string(),
        ));
    }
    if gt.len() > anchors.len() {
        return Err(LaneError::AssignmentOverflow {
            gts: gt.len(),
            anchors: anchors.len(),
        });
    }
    let p = anchors.spec.key_points;
    for (i, (code, lane)) in gt.iter().enumerate() {
        if lane.len() != p || code.valid != lane.valid() {
            return Err(LaneError::ShapeMismatch(format!(
                "ground-truth lane {i} does not match the {p}-row grid or its code"
            )));
        }
    }

    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(gt.len() * anchors.len());
    for (g, (_, lane)) in gt.iter().enumerate() {
        for (k, anchor) in anchors.anchors.iter().enumerate() {
            pairs.push((assignment_cost(anchor, lane), k, g));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let n = anchors.len();
    let mut out = AnchorTargets {
        gconf: vec![false; n],
        gdx: Array2::zeros((n, p)),
        valid: Array2::from_elem((n, p), false),
        len: vec![0; n],
        gt_index: vec![None; n],
    };
    let mut lane_done = vec![false; gt.len()];
    let mut remaining = gt.len();
    for (_, k, g) in pairs {
        if remaining == 0 {
            break;
        }
        if lane_done[g] || out.gconf[k] {
            continue;
        }
        lane_done[g] = true;
        remaining -= 1;
        let lane = &gt[g].1;
        let anchor = &anchors.anchors[k];
        out.gconf[k] = true;
        out.gt_index[k] = Some(g);
        out.len[k] = lane.valid_count();
        for i in lane.valid_range() {
            out.gdx[[k, i]] = lane.xs()[i] - anchor.sampled_xs[i];
            out.valid[[k, i]] = true;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchoring::{generate_anchors, AnchorParams, VanishingPoint};
    use crate::repr::{encode, ImageSpec};

    fn set() -> AnchorSet {
        generate_anchors(
            &VanishingPoint::new(320.0, 100.0),
            &AnchorParams::default(),
            &ImageSpec::default(),
        )
        .unwrap()
    }

    #[test]
    fn lane_on_an_anchor_line_takes_that_anchor() {
        let anchors = set();
        let spec = anchors.spec;
        let target = anchors
            .anchors
            .iter()
            .position(|a| a.point_index == 40 && a.theta_deg == 60.0)
            .unwrap();
        let line = anchors.anchors[target].line;
        let lane = LanePolyline::from_fn(&spec, 25..60, |y| line.x_at(y)).unwrap();
        let code = encode(&lane, &spec).unwrap();
        let t = assign_targets(&anchors, &[(code.clone(), lane)]).unwrap();
        assert_eq!(t.positives().collect::<Vec<_>>(), vec![target]);
        for i in 0..spec.key_points {
            assert!((t.gdx[[target, i]] - code.dx[i]).abs() < 1e-9);
            assert_eq!(t.valid[[target, i]], code.valid[i]);
        }
        assert_eq!(t.len[target], 35);
    }

    #[test]
    fn equidistant_lane_goes_to_lower_index() {
        let anchors = set();
        let spec = anchors.spec;
        // midway between the two vertical anchors through x = 320 and x = 325 (same row of origins)
        let lane = LanePolyline::from_fn(&spec, 30..70, |_| 322.5).unwrap();
        let code = encode(&lane, &spec).unwrap();
        let t = assign_targets(&anchors, &[(code, lane)]).unwrap();
        let k = t.positives().next().unwrap();
        let a = &anchors.anchors[k];
        assert_eq!(a.theta_deg, 90.0);
        // lowest point index among the origins at x = 320 (top row of the window)
        assert_eq!(a.origin.x, 320.0);
        assert_eq!(a.point_index, 4);
    }

    #[test]
    fn conflicting_lanes_do_not_share_an_anchor() {
        let anchors = set();
        let spec = anchors.spec;
        let l1 = LanePolyline::from_fn(&spec, 30..70, |_| 320.0).unwrap();
        let l2 = LanePolyline::from_fn(&spec, 30..70, |_| 320.4).unwrap();
        let gt: Vec<_> = [l1, l2]
            .into_iter()
            .map(|l| (encode(&l, &spec).unwrap(), l))
            .collect();
        let t = assign_targets(&anchors, &gt).unwrap();
        assert_eq!(t.positive_count(), 2);
        let idx: Vec<_> = t.positives().collect();
        assert_ne!(t.gt_index[idx[0]], t.gt_index[idx[1]]);
    }

    #[test]
    fn overflow_is_reported() {
        let spec = ImageSpec::default();
        let anchors = generate_anchors(
            &VanishingPoint::new(320.0, 100.0),
            &AnchorParams {
                w_anchor: 0,
                s_anchor: 5,
                a_anchor: 90.0,
            },
            &spec,
        )
        .unwrap();
        let lane = LanePolyline::from_fn(&spec, 30..70, |_| 320.0).unwrap();
        let code = encode(&lane, &spec).unwrap();
        let gt = vec![(code.clone(), lane.clone()), (code, lane)];
        assert!(matches!(
            assign_targets(&anchors, &gt),
            Err(LaneError::AssignmentOverflow { gts: 2, anchors: 1 })
        ));
    }
}
