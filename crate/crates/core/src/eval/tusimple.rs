use std::ops::AddAssign;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::matching::max_weight_pairs;
use crate::error::{LaneError, Result};
use crate::repr::LanePolyline;

/// Public benchmark convention for a correct point.
pub const TUSIMPLE_X_THRESH_PX: f64 = 20.0;

/// Correct points over ground-truth points; sums across images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TuSimpleCounts {
    pub hits: usize,
    pub total: usize,
}

impl TuSimpleCounts {
    /// `hits / total`, or 1 when there is nothing to find.
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }
}

impl AddAssign for TuSimpleCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.hits += rhs.hits;
        self.total += rhs.total;
    }
}

fn hits(pred: &LanePolyline, gt: &LanePolyline, x_thresh: f64) -> usize {
    (0..gt.len())
        .filter(|&i| {
            gt.valid()[i] && pred.valid()[i] && (pred.xs()[i] - gt.xs()[i]).abs() <= x_thresh
        })
        .count()
}

/// Hit counts for one image after matching predictions to ground-truth lanes.
///
/// The matching maximizes the number of lane pairs with at least one hit, then
/// the total hits. Unmatched ground-truth lanes contribute only misses.
pub fn tusimple_counts(
    preds: &[LanePolyline],
    gts: &[LanePolyline],
    x_thresh_px: f64,
) -> Result<TuSimpleCounts> {
    let n = gts.first().or(preds.first()).map_or(0, |l| l.len());
    if let Some(l) = preds.iter().chain(gts).find(|l| l.len() != n) {
        return Err(LaneError::RowGridMismatch(format!(
            "lanes sampled on {} and {} rows",
            n,
            l.len()
        )));
    }
    let weights = Array2::from_shape_fn((preds.len(), gts.len()), |(i, j)| {
        let h = hits(&preds[i], &gts[j], x_thresh_px) as i64;
        if h > 0 {
            (1 << 32) + h
        } else {
            0
        }
    });
    let hits = max_weight_pairs(&weights)
        .into_iter()
        .map(|(i, j)| (weights[[i, j]] - (1 << 32)) as usize)
        .sum();
    Ok(TuSimpleCounts {
        hits,
        total: gts.iter().map(|g| g.valid_count()).sum(),
    })
}

/// Fraction of ground-truth points predicted within `x_thresh_px`.
pub fn tusimple_accuracy(
    preds: &[LanePolyline],
    gts: &[LanePolyline],
    x_thresh_px: f64,
) -> Result<f64> {
    Ok(tusimple_counts(preds, gts, x_thresh_px)?.accuracy())
}
