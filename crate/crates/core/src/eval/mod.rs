//! Lane-level evaluation: CULane-style F1 over 30-px-wide lane masks and
//! TuSimple-style point accuracy.

mod matching;
mod tusimple;

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{LaneError, Result};
use crate::repr::{ImageSpec, LanePolyline};
use crate::structures::polyline_cells;

pub use matching::max_threshold_matching;
pub use tusimple::{tusimple_accuracy, tusimple_counts, TuSimpleCounts, TUSIMPLE_X_THRESH_PX};

pub const LANE_WIDTH_PX: f64 = 30.0;
pub const IOU_THRESH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalParams {
    pub iou_thresh: f64,
    pub width_px: f64,
    pub x_thresh_px: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            iou_thresh: IOU_THRESH,
            width_px: LANE_WIDTH_PX,
            x_thresh_px: TUSIMPLE_X_THRESH_PX,
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_thresh > 0.0 && self.iou_thresh <= 1.0) {
            return Err(LaneError::param("eval.iou_thresh", "must lie in (0, 1]"));
        }
        if !(self.width_px >= 1.0) {
            return Err(LaneError::param("eval.width_px", "must be >= 1"));
        }
        if !(self.x_thresh_px >= 0.0) {
            return Err(LaneError::param("eval.x_thresh_px", "must be >= 0"));
        }
        Ok(())
    }
}

/// Full-resolution pixels covered by `lane` drawn `width_px` wide, as sorted
/// flat indices. Parts outside the image are clipped.
pub fn lane_pixels(lane: &LanePolyline, spec: &ImageSpec, width_px: f64) -> Vec<usize> {
    polyline_cells(
        &lane.points(&spec.rows()),
        spec.height as usize,
        spec.width as usize,
        1,
        width_px,
    )
}

fn sorted_intersection(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn pixel_iou(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let inter = sorted_intersection(a, b);
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// IoU of two lanes rasterized `width_px` wide at full resolution.
pub fn lane_iou(
    pred: &LanePolyline,
    gt: &LanePolyline,
    spec: &ImageSpec,
    width_px: f64,
) -> Result<f64> {
    if !(width_px >= 1.0) {
        return Err(LaneError::param("width_px", "must be >= 1"));
    }
    let a = lane_pixels(pred, spec, width_px);
    let b = lane_pixels(gt, spec, width_px);
    if a.is_empty() || b.is_empty() {
        return Err(LaneError::EmptyRaster);
    }
    Ok(pixel_iou(&a, &b))
}

/// `preds x gts` IoU matrix; lanes entirely outside the image score 0.
pub fn iou_matrix(
    preds: &[LanePolyline],
    gts: &[LanePolyline],
    spec: &ImageSpec,
    width_px: f64,
) -> Array2<f64> {
    let pp: Vec<_> = preds
        .iter()
        .map(|l| lane_pixels(l, spec, width_px))
        .collect();
    let gp: Vec<_> = gts.iter().map(|l| lane_pixels(l, spec, width_px)).collect();
    Array2::from_shape_fn((pp.len(), gp.len()), |(i, j)| pixel_iou(&pp[i], &gp[j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub matches: Vec<MatchRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub category: Option<String>,
    /// Full IoU matrix, kept for the per-image CSV.
    #[serde(skip)]
    pub ious: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_image: Vec<ImageReport>,
}

/// `(precision, recall, f1)` with `0 / 0` read as 0.
pub fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f1 = if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    };
    (p, r, f1)
}

/// Matches one image's predictions to its ground truth.
pub fn score_image(
    preds: &[LanePolyline],
    gts: &[LanePolyline],
    spec: &ImageSpec,
    iou_thresh: f64,
    width_px: f64,
) -> ImageReport {
    let ious = iou_matrix(preds, gts, spec, width_px);
    let matches: Vec<MatchRecord> = max_threshold_matching(&ious, iou_thresh)
        .into_iter()
        .map(|(pred, gt)| MatchRecord {
            pred,
            gt,
            iou: ious[[pred, gt]],
        })
        .collect();
    let tp = matches.len();
    ImageReport {
        tp,
        fp: preds.len() - tp,
        fn_: gts.len() - tp,
        matches,
        category: None,
        ious,
    }
}

/// One evaluation unit: predicted and ground-truth lanes of an image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageLanes {
    pub preds: Vec<LanePolyline>,
    pub gts: Vec<LanePolyline>,
    pub category: Option<String>,
}

/// Per-image maximum matching at `iou_thresh`, aggregated into F1.
///
/// Images without ground truth count every prediction as a false positive.
pub fn match_and_score(
    images: &[ImageLanes],
    spec: &ImageSpec,
    iou_thresh: f64,
    width_px: f64,
) -> Result<EvalReport> {
    EvalParams {
        iou_thresh,
        width_px,
        ..Default::default()
    }
    .validate()?;
    let per_image: Vec<ImageReport> = images
        .iter()
        .map(|img| {
            let mut r = score_image(&img.preds, &img.gts, spec, iou_thresh, width_px);
            r.category = img.category.clone();
            r
        })
        .collect();
    let tp = per_image.iter().map(|r| r.tp).sum();
    let fp = per_image.iter().map(|r| r.fp).sum();
    let fn_ = per_image.iter().map(|r| r.fn_).sum();
    let (precision, recall, f1) = prf(tp, fp, fn_);
    Ok(EvalReport {
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1,
        per_image,
    })
}

impl EvalReport {
    /// CSV of every IoU entry: `image,pred,gt,iou,matched`.
    pub fn write_iou_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["image", "pred", "gt", "iou", "matched"])?;
        for (k, img) in self.per_image.iter().enumerate() {
            for ((i, j), &v) in img.ious.indexed_iter() {
                let matched = img.matches.iter().any(|m| m.pred == i && m.gt == j);
                w.write_record([
                    k.to_string(),
                    i.to_string(),
                    j.to_string(),
                    format!("{v:.6}"),
                    u8::from(matched).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ImageSpec {
        ImageSpec::default()
    }

    fn vertical(x: f64) -> LanePolyline {
        LanePolyline::from_fn(&spec(), 10..72, |_| x).unwrap()
    }

    #[test]
    fn identical_lanes() {
        let a = vertical(200.0);
        assert_eq!(lane_iou(&a, &a, &spec(), 30.0).unwrap(), 1.0);
    }

    #[test]
    fn separated_lanes_do_not_overlap() {
        let iou = lane_iou(&vertical(200.0), &vertical(231.0), &spec(), 30.0).unwrap();
        assert_eq!(iou, 0.0);
    }

    #[test]
    fn half_width_shift_is_one_third() {
        let iou = lane_iou(&vertical(200.0), &vertical(215.0), &spec(), 30.0).unwrap();
        assert!((iou - 1.0 / 3.0).abs() < 0.02, "{iou}");
    }

    #[test]
    fn off_image_lane_is_an_empty_raster() {
        let out = LanePolyline::from_fn(&spec(), 10..72, |_| -100.0).unwrap();
        assert!(matches!(
            lane_iou(&out, &vertical(10.0), &spec(), 30.0),
            Err(LaneError::EmptyRaster)
        ));
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let gts = vec![vertical(100.0), vertical(300.0), vertical(500.0)];
        let img = ImageLanes {
            preds: gts.clone(),
            gts: gts.clone(),
            category: None,
        };
        let r = match_and_score(&[img], &spec(), 0.5, 30.0).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.f1), (3, 0, 0, 1.0));
        let none = ImageLanes {
            preds: vec![],
            gts,
            category: None,
        };
        let r = match_and_score(&[none], &spec(), 0.5, 30.0).unwrap();
        assert_eq!((r.tp, r.fn_, r.f1), (0, 3, 0.0));
    }

    #[test]
    fn zero_gt_image_counts_false_positives() {
        let img = ImageLanes {
            preds: vec![vertical(100.0)],
            gts: vec![],
            category: Some("cross".into()),
        };
        let r = match_and_score(&[img], &spec(), 0.5, 30.0).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (0, 1, 0));
        assert_eq!(r.per_image[0].category.as_deref(), Some("cross"));
    }

    #[test]
    fn report_json_uses_fn_key() {
        let r = match_and_score(&[ImageLanes::default()], &spec(), 0.5, 30.0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["fn"], 0);
        assert_eq!(v["f1"], 0.0);
        let mut buf = Vec::new();
        r.write_iou_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "image,pred,gt,iou,matched\n"
        );
    }

    #[test]
    fn prf_zero_cases() {
        assert_eq!(prf(0, 0, 0), (0.0, 0.0, 0.0));
        let (p, r, f) = prf(2, 2, 0);
        assert_eq!((p, r), (0.5, 1.0));
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
    }
}
