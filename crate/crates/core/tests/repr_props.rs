mod common;

use lane_core::geometry::Point2;
use lane_core::repr::{decode, encode, min_circumscribed_rect, ImageSpec};
use proptest::prelude::*;

fn point_set() -> impl Strategy<Value = Vec<Point2>> {
    prop::collection::vec((0.0..640.0f64, 0.0..360.0f64), 3..=64)
        .prop_map(|v| v.into_iter().map(|(x, y)| Point2::new(x, y)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn encode_decode_round_trip(seed in any::<u64>(), p in 2usize..100) {
        let spec = ImageSpec::new(360, 640, p).unwrap();
        let lane = common::random_lane(&mut common::rng(seed), &spec);
        let back = decode(&encode(&lane, &spec).unwrap(), &spec).unwrap();
        prop_assert_eq!(back.valid(), lane.valid());
        for (a, b) in back.xs().iter().zip(lane.xs()) {
            prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
        }
    }

    #[test]
    fn center_line_is_normalized(seed in any::<u64>()) {
        let spec = ImageSpec::default();
        let code = encode(&common::random_lane(&mut common::rng(seed), &spec), &spec).unwrap();
        let l = code.center;
        prop_assert!((l.a.hypot(l.b) - 1.0).abs() < 1e-12);
        prop_assert!(l.a > 0.0);
        let (s, c) = l.theta_deg.to_radians().sin_cos();
        // direction (cos, sin) is perpendicular to the normal (a, b)
        prop_assert!((l.a * c + l.b * s).abs() < 1e-9);
        prop_assert!(code.rect_h >= code.rect_w);
    }

    #[test]
    fn rectangle_contains_every_point(pts in point_set()) {
        if let Ok(r) = min_circumscribed_rect(&pts) {
            for p in &pts {
                prop_assert!(r.contains(*p, 1e-6));
            }
        }
    }

    #[test]
    fn rectangle_no_larger_than_coarse_sweep(pts in point_set()) {
        if let Ok(r) = min_circumscribed_rect(&pts) {
            prop_assert!(r.area() <= common::sweep_min_area(&pts, 0.5) + 1e-6);
        }
    }
}

#[test]
fn rectangle_matches_fine_sweep_on_fixed_sets() {
    let mut rng = common::rng(17);
    for _ in 0..20 {
        use rand::Rng;
        let n = rng.random_range(3..=64);
        let pts: Vec<Point2> = (0..n)
            .map(|_| Point2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..360.0)))
            .collect();
        let r = min_circumscribed_rect(&pts).unwrap();
        let oracle = common::sweep_min_area(&pts, 0.01);
        assert!(r.area() <= oracle + 1e-6);
        // the sweep misses the optimum by at most a sliver
        assert!(
            r.area() >= oracle * (1.0 - 1e-3),
            "{} vs {}",
            r.area(),
            oracle
        );
    }
}
