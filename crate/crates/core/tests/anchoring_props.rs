mod common;

use lane_core::anchoring::{
    approximate_vp, generate_anchors, line_nms, vp_mask, AnchorParams, ScoredProposal,
    VanishingPoint, VP_RADIUS_PX,
};
use lane_core::repr::{encode, BoxLineCode, ImageSpec, LanePolyline};
use lane_core::trainer::generate_scene;
use proptest::prelude::*;
use rand::Rng;

fn codes(lanes: &[LanePolyline], spec: &ImageSpec) -> Vec<BoxLineCode> {
    lanes.iter().map(|l| encode(l, spec).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn nms_is_idempotent(seed in any::<u64>(), n in 0usize..60, dist in 1.0..40.0f64) {
        let props = common::random_proposals(&mut common::rng(seed), n, 72);
        let once = line_nms(&props, dist, 0.3);
        let twice = line_nms(&once, dist, 0.3);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn raising_conf_thresh_never_adds_survivors(seed in any::<u64>(), n in 0usize..60, lo in 0.0..1.0f64, hi in 0.0..1.0f64) {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let props = common::random_proposals(&mut common::rng(seed), n, 72);
        let loose = line_nms(&props, 15.0, lo);
        let strict = line_nms(&props, 15.0, hi);
        prop_assert!(strict.len() <= loose.len());
        // greedy order makes the strict result exactly the confident part of the loose one
        let expect: Vec<ScoredProposal> = loose.into_iter().filter(|p| p.conf >= hi).collect();
        prop_assert_eq!(strict, expect);
    }

    #[test]
    fn reflecting_lanes_reflects_the_vp(seed in 0u64..1000) {
        let spec = ImageSpec::default();
        let scene = generate_scene(seed, &spec, 4, 1.0).unwrap();
        let w = spec.width as f64;
        let mirrored: Vec<LanePolyline> = scene
            .lanes
            .iter()
            .map(|l| {
                let xs = l.xs().iter().zip(l.valid()).map(|(&x, &v)| if v { w - x } else { 0.0 }).collect();
                LanePolyline::new(xs, l.valid().to_vec()).unwrap()
            })
            .collect();
        let a = approximate_vp(&codes(&scene.lanes, &spec)).unwrap();
        let b = approximate_vp(&codes(&mirrored, &spec)).unwrap();
        prop_assert!((a.x - (w - b.x)).abs() < 1e-6, "{} vs {}", a.x, w - b.x);
        prop_assert!((a.y - b.y).abs() < 1e-6);
    }
}

#[test]
fn jittered_copies_collapse_to_the_true_lanes() {
    let mut rng = common::rng(5);
    let p = 72;
    for k in 1..=5usize {
        let mut props = Vec::new();
        for lane in 0..k {
            let x0 = 60.0 + 120.0 * lane as f64;
            for _ in 0..50 {
                let j = rng.random_range(-3.0..3.0);
                let xs = (0..p).map(|i| x0 + j + 0.5 * i as f64).collect();
                props.push(
                    ScoredProposal::new(rng.random_range(0.5..1.0), xs, vec![true; p]).unwrap(),
                );
            }
        }
        assert_eq!(line_nms(&props, 15.0, 0.5).len(), k);
    }
}

#[test]
fn anchors_satisfy_their_line_equations() {
    let spec = ImageSpec::default();
    let params = AnchorParams::default();
    let rows = spec.rows();
    for vp in [
        VanishingPoint::new(320.0, 120.0),
        VanishingPoint::new(-50.0, 400.0),
    ] {
        let set = generate_anchors(&vp, &params, &spec).unwrap();
        assert_eq!(set.len(), 81 * 35);
        for a in &set.anchors {
            for (&x, &y) in a.sampled_xs.iter().zip(&rows) {
                assert!((a.line.a * x + a.line.b * y + a.line.c).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn anchors_capture_lanes_through_the_vp() {
    let spec = ImageSpec::default();
    let params = AnchorParams::default();
    let bound = params.s_anchor as f64 / 2.0
        + (params.a_anchor / 2.0).to_radians().tan() * spec.height as f64;
    let rows = spec.rows();
    for seed in 0..100 {
        let scene = generate_scene(seed, &spec, 2 + seed as usize % 5, 0.0).unwrap();
        let set = generate_anchors(&scene.vp_true, &params, &spec).unwrap();
        for code in codes(&scene.lanes, &spec) {
            let best = set
                .anchors
                .iter()
                .map(|a| {
                    let d: f64 = a
                        .sampled_xs
                        .iter()
                        .zip(&rows)
                        .map(|(&x, &y)| {
                            (code.center.a * x + code.center.b * y + code.center.c).abs()
                        })
                        .sum();
                    d / rows.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            assert!(best <= bound, "seed {seed}: {best} > {bound}");
        }
    }
}

#[test]
fn vp_fidelity_on_noiseless_scenes() {
    let spec = ImageSpec::default();
    for seed in 0..100 {
        let scene = generate_scene(seed, &spec, 2 + seed as usize % 7, 0.0).unwrap();
        let vp = approximate_vp(&codes(&scene.lanes, &spec)).unwrap();
        let err = (vp.x - scene.vp_true.x).hypot(vp.y - scene.vp_true.y);
        assert!(err < 3.0, "seed {seed}: {err}");
    }
}

#[test]
fn full_resolution_mask_area() {
    let spec = ImageSpec::default();
    let area = std::f64::consts::PI * VP_RADIUS_PX * VP_RADIUS_PX;
    let mut rng = common::rng(2);
    for _ in 0..50 {
        let vp = VanishingPoint::new(rng.random_range(20.0..620.0), rng.random_range(20.0..340.0));
        let m = vp_mask(&vp, &spec, 1, VP_RADIUS_PX).unwrap();
        let rel = (m.count() as f64 - area).abs() / area;
        assert!(rel <= 0.02, "{vp:?}: {} cells", m.count());
    }
}
