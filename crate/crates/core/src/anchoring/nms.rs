use serde::{Deserialize, Serialize};

use crate::error::{LaneError, Result};

/// A lane proposal with its confidence, sampled on the key-point rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredProposal {
    pub conf: f64,
    pub xs: Vec<f64>,
    pub valid: Vec<bool>,
    pub len: usize,
}

impl ScoredProposal {
    pub fn new(conf: f64, xs: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if !conf.is_finite() {
            return Err(LaneError::InvalidLane(format!(
                "non-finite confidence {conf}"
            )));
        }
        if xs.len() != valid.len() {
            return Err(LaneError::ShapeMismatch(format!(
                "{} xs vs {} mask entries",
                xs.len(),
                valid.len()
            )));
        }
        let len = valid.iter().filter(|&&v| v).count();
        if let Some(first) = valid.iter().position(|&v| v) {
            if valid[first..first + len].iter().any(|&v| !v) {
                return Err(LaneError::InvalidLane(
                    "proposal rows are not contiguous".to_string(),
                ));
            }
        }
        Ok(Self {
            conf,
            xs,
            valid,
            len,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmsParams {
    pub dist_thresh_px: f64,
    pub conf_thresh: f64,
}

impl Default for NmsParams {
    fn default() -> Self {
        Self {
            dist_thresh_px: 15.0,
            conf_thresh: 0.5,
        }
    }
}

/// Mean `|x - x'|` over rows valid in both proposals; infinite below two shared rows.
pub fn proposal_distance(a: &ScoredProposal, b: &ScoredProposal) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..a.xs.len().min(b.xs.len()) {
        if a.valid[i] && b.valid[i] {
            sum += (a.xs[i] - b.xs[i]).abs();
            n += 1;
        }
    }
    if n < 2 {
        f64::INFINITY
    } else {
        sum / n as f64
    }
}

/// Greedy Line-NMS: drop proposals below `conf_thresh`, then keep proposals in
/// order of decreasing confidence whenever they are farther than
/// `dist_thresh_px` from everything already kept. Equal confidences keep
/// their input order.
pub fn line_nms(
    proposals: &[ScoredProposal],
    dist_thresh_px: f64,
    conf_thresh: f64,
) -> Vec<ScoredProposal> {
    let mut order: Vec<usize> = (0..proposals.len())
        .filter(|&i| proposals[i].conf >= conf_thresh)
        .collect();
    order.sort_by(|&i, &j| proposals[j].conf.total_cmp(&proposals[i].conf));

    let mut kept: Vec<ScoredProposal> = Vec::new();
    for i in order {
        let p = &proposals[i];
        if kept
            .iter()
            .all(|k| proposal_distance(p, k) > dist_thresh_px)
        {
            kept.push(p.clone());
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prop(conf: f64, x: f64) -> ScoredProposal {
        ScoredProposal::new(conf, vec![x; 10], vec![true; 10]).unwrap()
    }

    #[test]
    fn identical_proposals_collapse() {
        let out = line_nms(&[prop(0.8, 100.0), prop(0.9, 100.0)], 5.0, 0.0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].conf, 0.9);
    }

    #[test]
    fn distant_proposals_survive() {
        let out = line_nms(&[prop(0.8, 100.0), prop(0.9, 200.0)], 5.0, 0.0);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].xs[0], 200.0);
    }

    #[test]
    fn low_confidence_dropped() {
        let out = line_nms(&[prop(0.4, 100.0), prop(0.9, 300.0)], 15.0, 0.5);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].conf, 0.9);
    }

    #[test]
    fn little_overlap_means_no_suppression() {
        let mut a = vec![false; 10];
        let mut b = vec![false; 10];
        a[..5].fill(true);
        b[4..].fill(true);
        let pa = ScoredProposal::new(0.9, vec![100.0; 10], a).unwrap();
        let pb = ScoredProposal::new(0.8, vec![100.0; 10], b).unwrap();
        assert!(proposal_distance(&pa, &pb).is_infinite());
        assert_eq!(line_nms(&[pa, pb], 15.0, 0.0).len(), 2);
    }

    #[test]
    fn equal_confidence_keeps_input_order() {
        let out = line_nms(&[prop(0.7, 100.0), prop(0.7, 101.0)], 5.0, 0.0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].xs[0], 100.0);
    }

    #[test]
    fn gaps_rejected() {
        let r = ScoredProposal::new(0.5, vec![0.0; 3], vec![true, false, true]);
        assert!(r.is_err());
    }
}
