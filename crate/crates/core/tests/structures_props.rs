mod common;

use lane_core::geometry::Point2;
use lane_core::repr::ImageSpec;
use lane_core::structures::{
    fit_bev_line, parallelism_residual, rasterize_lanes, BevLine, Homography,
};
use lane_core::trainer::generate_scene;
use proptest::prelude::*;

fn affine() -> impl Strategy<Value = Homography> {
    // translations and axis scalings keep the IPM zero pattern under composition
    (0.5..2.0f64, 0.5..2.0f64, -50.0..50.0f64, -50.0..50.0f64)
        .prop_map(|(sx, sy, tx, ty)| Homography::new([sx, 0.0, tx, sy, ty, 0.0]).unwrap())
}

proptest! {
    #[test]
    fn composition_matches_sequential_projection(
        h1 in affine(),
        h2 in affine(),
        x in 0.0..640.0f64,
        y in 0.0..360.0f64,
    ) {
        let p = Point2::new(x, y);
        let seq = h2.project_point(h1.project_point(p).unwrap()).unwrap();
        let comp = h2.compose(&h1).unwrap().project_point(p).unwrap();
        prop_assert!((seq.x - comp.x).abs() < 1e-9 && (seq.y - comp.y).abs() < 1e-9);
    }

    #[test]
    fn residual_matches_cross_product_of_directions(
        t1 in 0.0..std::f64::consts::PI,
        t2 in 0.0..std::f64::consts::PI,
        k1 in 0.1..100.0f64,
        k2 in -100.0..-0.1f64,
        c in -10.0..10.0f64,
    ) {
        let (d1, d2) = (Point2::new(t1.cos(), t1.sin()), Point2::new(t2.cos(), t2.sin()));
        // normals are the directions rotated by 90 degrees, scaled arbitrarily
        let l1 = BevLine::new(-d1.y * k1, d1.x * k1, c).unwrap();
        let l2 = BevLine::new(-d2.y * k2, d2.x * k2, -c).unwrap();
        let r = parallelism_residual(&l1, &l2);
        prop_assert!((r - d1.cross(d2).abs()).abs() < 1e-12);
    }

    #[test]
    fn wider_raster_never_unsets_cells(seed in any::<u64>(), w in 1.0..20.0f64, extra in 0.0..10.0f64, scale in 1u32..8) {
        let spec = ImageSpec::default();
        let lane = common::random_lane(&mut common::rng(seed), &spec);
        let narrow = rasterize_lanes(std::slice::from_ref(&lane), &spec, scale, w).unwrap();
        let wide = rasterize_lanes(std::slice::from_ref(&lane), &spec, scale, w + extra).unwrap();
        for (a, b) in narrow.grid.iter().zip(wide.grid.iter()) {
            prop_assert!(*a <= *b);
        }
    }
}

#[test]
fn true_camera_makes_generated_lanes_parallel() {
    let spec = ImageSpec::default();
    let rows = spec.rows();
    for seed in 0..50 {
        let scene = generate_scene(seed, &spec, 6, 0.0).unwrap();
        let lines: Vec<BevLine> = scene
            .lanes
            .iter()
            .map(|l| {
                fit_bev_line(&scene.homography_true.project(&l.points(&rows)).unwrap()).unwrap()
            })
            .collect();
        for i in 0..lines.len() {
            for j in 0..i {
                let r = parallelism_residual(&lines[i], &lines[j]);
                assert!(r < 1e-9, "seed {seed}: residual {r:e}");
            }
        }
    }
}
