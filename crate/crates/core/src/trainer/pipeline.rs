use ndarray::{Array1, Axis};

use super::scene::HORIZON_MARGIN_PX;
use super::scorer::ScorerParams;
use super::train::PreparedScene;
use crate::anchoring::{line_nms, NmsParams, ScoredProposal};
use crate::error::Result;
use crate::eval::{match_and_score, EvalParams, EvalReport, ImageLanes};
use crate::repr::LanePolyline;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Confidence of every anchor of a scene.
pub fn anchor_confidences(params: &ScorerParams, prep: &PreparedScene) -> Array1<f64> {
    super::train::conf_logits(&prep.descriptors, params).mapv(sigmoid)
}

/// Scored proposals for anchors at or above `conf_thresh`.
///
/// A proposal covers the rows below the VP margin where `anchor + dx` stays
/// inside the image, cut at the first row that leaves it.
pub fn scene_proposals(
    params: &ScorerParams,
    prep: &PreparedScene,
    conf_thresh: f64,
) -> Vec<ScoredProposal> {
    let conf = anchor_confidences(params, prep);
    let keep: Vec<usize> = (0..conf.len())
        .filter(|&k| conf[k] >= conf_thresh)
        .collect();
    if keep.is_empty() {
        return Vec::new();
    }
    let w_dx = params.weights.slice(ndarray::s![.., 1..]);
    let b_dx = params.bias.slice(ndarray::s![1..]);
    let dx = prep.descriptors.select(Axis(0), &keep).dot(&w_dx) + b_dx;
    let width = prep.spec.width as f64;
    let top = prep.vp.y + HORIZON_MARGIN_PX;
    let mut out = Vec::with_capacity(keep.len());
    for (row, &k) in keep.iter().enumerate() {
        let anchor = &prep.anchors.anchors[k];
        let xs: Vec<f64> = (0..prep.rows.len())
            .map(|i| anchor.sampled_xs[i] + dx[[row, i]])
            .collect();
        let mut valid = vec![false; xs.len()];
        let mut started = false;
        for i in 0..xs.len() {
            let ok =
                prep.rows[i] >= top && xs[i].is_finite() && (0.0..=width - 1.0).contains(&xs[i]);
            if ok {
                valid[i] = true;
                started = true;
            } else if started {
                break;
            }
        }
        if valid.iter().filter(|&&v| v).count() < 2 {
            continue;
        }
        let xs = xs
            .iter()
            .zip(&valid)
            .map(|(&x, &v)| if v { x } else { 0.0 })
            .collect();
        if let Ok(p) = ScoredProposal::new(conf[k], xs, valid) {
            out.push(p);
        }
    }
    out
}

/// Post-NMS lanes predicted for a scene.
pub fn predict_lanes(
    params: &ScorerParams,
    prep: &PreparedScene,
    nms: &NmsParams,
) -> Vec<LanePolyline> {
    let proposals = scene_proposals(params, prep, nms.conf_thresh);
    line_nms(&proposals, nms.dist_thresh_px, nms.conf_thresh)
        .into_iter()
        .filter_map(|p| LanePolyline::new(p.xs, p.valid).ok())
        .collect()
}

/// Predicts every scene and scores it against `ground_truth` (one lane set per scene).
pub fn evaluate_predictions(
    params: &ScorerParams,
    prepared: &[PreparedScene],
    ground_truth: &[Vec<LanePolyline>],
    nms: &NmsParams,
    eval: &EvalParams,
) -> Result<EvalReport> {
    let images: Vec<ImageLanes> = prepared
        .iter()
        .zip(ground_truth)
        .map(|(prep, gts)| ImageLanes {
            preds: predict_lanes(params, prep, nms),
            gts: gts.clone(),
            category: None,
        })
        .collect();
    let spec = prepared.first().map(|p| p.spec).unwrap_or_default();
    match_and_score(&images, &spec, eval.iou_thresh, eval.width_px)
}
