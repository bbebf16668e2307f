//! Loss terms with analytic gradients, their weighted total, a
//! finite-difference gradient checker and homography fitting by descent on
//! the parallelism loss.
//!
//! Reductions: the dense mask terms (VP mask, lane segmentation) average over
//! cells; the proposal terms (confidence, regression, parallelism, attention)
//! sum.

mod gradcheck;
mod homography_opt;
mod terms;

use std::collections::BTreeMap;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

pub use gradcheck::{
    central_difference, check_gradient, run_gradcheck, GradCheckEntry, GradCheckReport, FD_STEP,
};
pub use homography_opt::{
    optimize_homography, optimize_homography_with, parallelism_of_lanes, HomographyFit,
    HomographyFitOptions,
};
pub use terms::{
    attention_regression_loss, bce_mask_loss, confidence_loss, parallelism_loss, regression_loss,
    smooth_l1, smooth_l1_grad, total_loss, LossInputs, TotalLoss, BCE_EPS,
};

/// Gradient map keys.
pub mod keys {
    pub const PRED: &str = "pred";
    pub const CONF: &str = "conf";
    pub const DX: &str = "dx";
    pub const XS_PRED: &str = "xs_pred";
    pub const LINES: &str = "lines";
    pub const VP_PRED: &str = "vp_pred";
    pub const SEG_PRED: &str = "seg_pred";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFlag {
    /// Fewer than two lanes: the lane-level term is zero by convention.
    TooFewLanes,
}

/// A scalar loss with its gradients keyed by input name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossValue {
    pub value: f64,
    pub gradients: BTreeMap<String, ArrayD<f64>>,
    pub flags: Vec<LossFlag>,
}

impl LossValue {
    pub fn gradient(&self, key: &str) -> Option<&ArrayD<f64>> {
        self.gradients.get(key)
    }

    /// Adds `weight * other` into `self`, summing gradients of shared inputs.
    pub fn accumulate(&mut self, other: &LossValue, weight: f64) -> crate::Result<()> {
        self.value += weight * other.value;
        for (k, g) in &other.gradients {
            match self.gradients.get_mut(k) {
                Some(acc) => {
                    if acc.shape() != g.shape() {
                        return Err(crate::LaneError::ShapeMismatch(format!(
                            "gradient `{k}` has shapes {:?} and {:?}",
                            acc.shape(),
                            g.shape()
                        )));
                    }
                    acc.scaled_add(weight, g);
                }
                None => {
                    self.gradients.insert(k.clone(), g * weight);
                }
            }
        }
        for f in &other.flags {
            if !self.flags.contains(f) {
                self.flags.push(*f);
            }
        }
        Ok(())
    }
}

/// Weights of the six terms of the total objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub vp: f64,
    pub conf: f64,
    pub reg: f64,
    pub pixel: f64,
    pub lane: f64,
    pub image: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

impl LossWeights {
    pub const fn uniform(w: f64) -> Self {
        Self {
            vp: w,
            conf: w,
            reg: w,
            pixel: w,
            lane: w,
            image: w,
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.vp, self.conf, self.reg, self.pixel, self.lane, self.image,
        ]
    }

    pub fn validate(&self) -> crate::Result<()> {
        let names = ["vp", "conf", "reg", "pixel", "lane", "image"];
        for (name, w) in names.iter().zip(self.as_array()) {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(crate::LaneError::param(
                    format!("loss.{name}"),
                    "weights must be finite and nonnegative",
                ));
            }
        }
        Ok(())
    }
}
