mod common;

use lane_core::eval::{
    iou_matrix, lane_iou, match_and_score, max_threshold_matching, ImageLanes, IOU_THRESH,
    LANE_WIDTH_PX,
};
use lane_core::repr::{ImageSpec, LanePolyline};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn shifted(lane: &LanePolyline, rng: &mut impl Rng) -> LanePolyline {
    let dx = rng.random_range(-40.0..40.0);
    let tilt = rng.random_range(-0.3..0.3);
    let xs = lane
        .xs()
        .iter()
        .zip(lane.valid())
        .enumerate()
        .map(|(i, (&x, &v))| if v { x + dx + tilt * i as f64 } else { 0.0 })
        .collect();
    LanePolyline::new(xs, lane.valid().to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn iou_is_symmetric_and_reflexive(seed in any::<u64>()) {
        let spec = ImageSpec::default();
        let mut rng = common::rng(seed);
        let a = common::random_long_lane(&mut rng, &spec);
        let b = shifted(&a, &mut rng);
        let ab = lane_iou(&a, &b, &spec, LANE_WIDTH_PX).unwrap();
        let ba = lane_iou(&b, &a, &spec, LANE_WIDTH_PX).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(lane_iou(&a, &a, &spec, LANE_WIDTH_PX).unwrap(), 1.0);
    }

    #[test]
    fn matching_equals_exhaustive_optimum(
        cells in prop::collection::vec(prop::sample::select(vec![0.0, 0.2, 0.49, 0.5, 0.51, 0.7, 0.9]), 0..36),
        cols in 1usize..7,
    ) {
        let rows = cells.len() / cols;
        let m = Array2::from_shape_vec((rows, cols), cells[..rows * cols].to_vec()).unwrap();
        let pairs = max_threshold_matching(&m, IOU_THRESH);
        let table: Vec<Vec<f64>> = m.outer_iter().map(|r| r.to_vec()).collect();
        prop_assert_eq!(pairs.len(), common::exhaustive_matching(&table, IOU_THRESH));
        for &(i, j) in &pairs {
            prop_assert!(m[[i, j]] >= IOU_THRESH);
        }
        let mut ps: Vec<_> = pairs.iter().map(|p| p.0).collect();
        let mut gs: Vec<_> = pairs.iter().map(|p| p.1).collect();
        ps.dedup();
        gs.sort_unstable();
        gs.dedup();
        prop_assert_eq!(ps.len(), pairs.len());
        prop_assert_eq!(gs.len(), pairs.len());
    }
}

#[test]
fn scores_match_exhaustive_optimum_on_lane_instances() {
    let spec = ImageSpec::default();
    let mut rng = common::rng(11);
    for _ in 0..100 {
        let gts: Vec<_> = (0..rng.random_range(0..=6))
            .map(|_| common::random_long_lane(&mut rng, &spec))
            .collect();
        let mut preds = Vec::new();
        for g in &gts {
            if rng.random_bool(0.7) {
                preds.push(shifted(g, &mut rng));
            }
        }
        while preds.len() < 6 && rng.random_bool(0.3) {
            preds.push(common::random_long_lane(&mut rng, &spec));
        }
        let m = iou_matrix(&preds, &gts, &spec, LANE_WIDTH_PX);
        let table: Vec<Vec<f64>> = m.outer_iter().map(|r| r.to_vec()).collect();
        let r = match_and_score(
            &[ImageLanes {
                preds: preds.clone(),
                gts: gts.clone(),
                category: None,
            }],
            &spec,
            IOU_THRESH,
            LANE_WIDTH_PX,
        )
        .unwrap();
        assert_eq!(r.tp, common::exhaustive_matching(&table, IOU_THRESH));
        assert_eq!(r.fp, preds.len() - r.tp);
        assert_eq!(r.fn_, gts.len() - r.tp);
    }
}

#[test]
fn iou_agrees_with_pixel_oracle() {
    let spec = ImageSpec::default();
    let mut rng = common::rng(23);
    for _ in 0..20 {
        let a = common::random_long_lane(&mut rng, &spec);
        let b = shifted(&a, &mut rng);
        let fast = lane_iou(&a, &b, &spec, LANE_WIDTH_PX).unwrap();
        let slow = common::brute_iou(&a, &b, &spec, LANE_WIDTH_PX);
        assert!((fast - slow).abs() < 0.02, "{fast} vs {slow}");
    }
}
