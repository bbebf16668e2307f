//! Central finite-difference verification of the analytic loss gradients.

use ndarray::{Array2, ArrayD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::terms::{
    attention_regression_loss, bce_mask_loss, confidence_loss, parallelism_loss, regression_loss,
    total_loss, LossInputs,
};
use super::{homography_opt, keys, LossValue, LossWeights};
use crate::anchoring::VanishingPoint;
use crate::error::Result;
use crate::geometry::Point2;
use crate::repr::ImageSpec;
use crate::structures::{attention_map, BevLine, Homography};

pub const FD_STEP: f64 = 1e-5;
const REL_FLOOR: f64 = 1e-8;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += h;
    let mut xm = x.to_vec();
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Largest relative error between `grad` and central differences of `f`
/// over all coordinates.
pub fn check_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64], h: f64) -> f64 {
    assert_eq!(x.len(), grad.len(), "gradient length");
    (0..x.len())
        .map(|i| {
            let n = central_difference(&f, x, i, h);
            (grad[i] - n).abs() / grad[i].abs().max(n.abs()).max(REL_FLOOR)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub loss: String,
    pub max_rel_error: f64,
    /// Random instances checked.
    pub points: usize,
    /// Coordinates differenced in total.
    pub evaluations: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn worst(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_error)
            .fold(0.0, f64::max)
    }
}

fn flat(a: &ArrayD<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

fn grad_of(v: &LossValue, key: &str) -> Vec<f64> {
    flat(v.gradient(key).expect("gradient key"))
}

/// Probability away from the BCE clamp.
fn prob(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.05..0.95)
}

/// A residual at least 0.05 away from 0 and from `|d| = 1`.
fn residual(rng: &mut ChaCha8Rng) -> f64 {
    let m = if rng.random_bool(0.5) {
        rng.random_range(0.05..0.95)
    } else {
        rng.random_range(1.05..3.0)
    };
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

fn grid(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    f: fn(&mut ChaCha8Rng) -> f64,
) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || f(rng))
}

fn binary(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        0.0
    }
}

/// Unnormalized lines with pairwise cross terms bounded away from zero.
fn random_lines(rng: &mut ChaCha8Rng, n: usize) -> Vec<BevLine> {
    loop {
        let lines: Vec<BevLine> = (0..n)
            .map(|_| BevLine {
                a: rng.random_range(-2.0..2.0),
                b: rng.random_range(-2.0..2.0),
                c: rng.random_range(-5.0..5.0),
            })
            .collect();
        let ok = (0..n).all(|i| {
            (0..n)
                .all(|j| i == j || (lines[i].a * lines[j].b - lines[j].a * lines[i].b).abs() > 0.05)
        });
        if ok {
            return lines;
        }
    }
}

fn lines_vec(lines: &[BevLine]) -> Vec<f64> {
    lines.iter().flat_map(|l| [l.a, l.b, l.c]).collect()
}

fn vec_lines(x: &[f64]) -> Vec<BevLine> {
    x.chunks(3)
        .map(|c| BevLine {
            a: c[0],
            b: c[1],
            c: c[2],
        })
        .collect()
}

struct Tally {
    name: &'static str,
    worst: f64,
    points: usize,
    evaluations: usize,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            worst: 0.0,
            points: 0,
            evaluations: 0,
        }
    }

    fn add(&mut self, err: f64, coords: usize) {
        self.worst = self.worst.max(err);
        self.points += 1;
        self.evaluations += coords;
    }

    fn finish(self, tol: f64) -> GradCheckEntry {
        GradCheckEntry {
            loss: self.name.to_string(),
            max_rel_error: self.worst,
            points: self.points,
            evaluations: self.evaluations,
            passed: self.worst.is_finite() && self.worst < tol,
        }
    }
}

/// Checks every loss at `points` random instances each.
pub fn run_gradcheck(points: usize, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = FD_STEP;
    let spec = ImageSpec::new(40, 64, 8)?;
    let rows = spec.rows();
    let (np, nr) = (4, rows.len());

    let mut vp_bce = Tally::new("vp_mask_bce");
    let mut conf = Tally::new("confidence_bce");
    let mut reg = Tally::new("regression_smooth_l1");
    let mut seg = Tally::new("segmentation_bce");
    let mut par = Tally::new("parallelism");
    let mut att = Tally::new("attention_regression");
    let mut tot = Tally::new("total");
    let mut hom = Tally::new("homography_parallelism");

    for _ in 0..points {
        // dense mask terms
        for tally in [&mut vp_bce, &mut seg] {
            let target = grid(&mut rng, 5, 6, binary);
            let pred = grid(&mut rng, 5, 6, prob);
            let g = grad_of(&bce_mask_loss(&pred, &target)?, keys::PRED);
            let f = |x: &[f64]| {
                let p = Array2::from_shape_vec((5, 6), x.to_vec()).unwrap();
                bce_mask_loss(&p, &target).unwrap().value
            };
            let x = pred.iter().copied().collect::<Vec<_>>();
            tally.add(check_gradient(f, &x, &g, h), x.len());
        }

        // confidence
        let gconf: Vec<f64> = (0..6).map(|_| binary(&mut rng)).collect();
        let c: Vec<f64> = (0..6).map(|_| prob(&mut rng)).collect();
        let g = grad_of(&confidence_loss(&c, &gconf)?, keys::CONF);
        conf.add(
            check_gradient(|x| confidence_loss(x, &gconf).unwrap().value, &c, &g, h),
            c.len(),
        );

        // regression and attention share an instance
        let gdx = grid(&mut rng, np, nr, |r| r.random_range(-5.0..5.0));
        let d = grid(&mut rng, np, nr, residual);
        let dx = &gdx + &d;
        let mask = Array2::from_shape_simple_fn((np, nr), || rng.random_bool(0.7));
        let g = grad_of(&regression_loss(&dx, &gdx, &mask)?, keys::DX);
        let xdx: Vec<f64> = dx.iter().copied().collect();
        let f = |x: &[f64]| {
            let p = Array2::from_shape_vec((np, nr), x.to_vec()).unwrap();
            regression_loss(&p, &gdx, &mask).unwrap().value
        };
        reg.add(check_gradient(f, &xdx, &g, h), xdx.len());

        let vp = VanishingPoint::new(rng.random_range(10.0..54.0), rng.random_range(5.0..20.0));
        let pam = attention_map(&vp, &spec, 4, 16.0, 8.0)?;
        let base = grid(&mut rng, np, nr, |r| r.random_range(0.0..64.0));
        let xs_gt = &base + &gdx;
        let xs_pred = &base + &dx;
        let g = grad_of(
            &attention_regression_loss(&xs_pred, &xs_gt, &mask, &rows, &pam)?,
            keys::XS_PRED,
        );
        let xp: Vec<f64> = xs_pred.iter().copied().collect();
        let f = |x: &[f64]| {
            let p = Array2::from_shape_vec((np, nr), x.to_vec()).unwrap();
            attention_regression_loss(&p, &xs_gt, &mask, &rows, &pam)
                .unwrap()
                .value
        };
        att.add(check_gradient(f, &xp, &g, h), xp.len());

        // parallelism on raw coefficient triples
        let lines = random_lines(&mut rng, 5);
        let g = grad_of(&parallelism_loss(&lines), keys::LINES);
        let xl = lines_vec(&lines);
        par.add(
            check_gradient(|x| parallelism_loss(&vec_lines(x)).value, &xl, &g, h),
            xl.len(),
        );

        // weighted total over every continuous input at once
        let weights = LossWeights {
            vp: rng.random_range(0.1..2.0),
            conf: rng.random_range(0.1..2.0),
            reg: rng.random_range(0.1..2.0),
            pixel: rng.random_range(0.1..2.0),
            lane: rng.random_range(0.1..2.0),
            image: rng.random_range(0.1..2.0),
        };
        let vp_target = grid(&mut rng, 3, 4, binary);
        let vp_pred = grid(&mut rng, 3, 4, prob);
        let seg_target = grid(&mut rng, 5, 6, binary);
        let seg_pred = grid(&mut rng, 5, 6, prob);
        let gconf: Vec<f64> = (0..np).map(|_| binary(&mut rng)).collect();
        let c: Vec<f64> = (0..np).map(|_| prob(&mut rng)).collect();
        let lines = random_lines(&mut rng, 3);
        let sizes = [
            vp_pred.len(),
            c.len(),
            dx.len(),
            seg_pred.len(),
            lines.len() * 3,
        ];
        let split = |x: &[f64]| {
            let mut it = x.iter().copied();
            let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<f64>>();
            (
                Array2::from_shape_vec((3, 4), take(sizes[0])).unwrap(),
                take(sizes[1]),
                Array2::from_shape_vec((np, nr), take(sizes[2])).unwrap(),
                Array2::from_shape_vec((5, 6), take(sizes[3])).unwrap(),
                vec_lines(&take(sizes[4])),
            )
        };
        let eval = |x: &[f64]| {
            let (vpp, cc, ddx, sp, ll) = split(x);
            let inputs = LossInputs {
                vp_pred: &vpp,
                vp_target: &vp_target,
                conf: &cc,
                gconf: &gconf,
                dx: &ddx,
                gdx: &gdx,
                reg_mask: &mask,
                base_xs: &base,
                rows: &rows,
                pam: &pam,
                seg_pred: &sp,
                seg_target: &seg_target,
                bev_lines: &ll,
            };
            total_loss(&inputs, &weights).unwrap()
        };
        let x: Vec<f64> = vp_pred
            .iter()
            .copied()
            .chain(c.iter().copied())
            .chain(dx.iter().copied())
            .chain(seg_pred.iter().copied())
            .chain(lines_vec(&lines))
            .collect();
        let t = eval(&x).loss;
        let g: Vec<f64> = [
            keys::VP_PRED,
            keys::CONF,
            keys::DX,
            keys::SEG_PRED,
            keys::LINES,
        ]
        .iter()
        .flat_map(|k| grad_of(&t, k))
        .collect();
        tot.add(check_gradient(|x| eval(x).loss.value, &x, &g, h), x.len());

        // parallelism through projection and line fitting, in scaled parameters
        let (err, n) = homography_point(&mut rng)?;
        hom.add(err, n);
    }

    Ok(GradCheckReport {
        step: h,
        tolerance,
        seed,
        entries: [vp_bce, conf, reg, seg, par, att, tot, hom]
            .into_iter()
            .map(|t| t.finish(tolerance))
            .collect(),
    })
}

fn homography_point(rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let (width, height) = (640.0, 360.0);
    let vy = rng.random_range(90.0..150.0);
    let lanes: Vec<Vec<Point2>> = (0..3)
        .map(|_| {
            let top = rng.random_range(200.0..440.0);
            let bottom = rng.random_range(-200.0..840.0);
            (0..12)
                .map(|k| {
                    let y = vy + 20.0 + k as f64 * (height - vy - 20.0) / 11.0;
                    let t = (y - vy - 20.0) / (height - vy - 20.0);
                    Point2::new(top + t * (bottom - top), y)
                })
                .collect()
        })
        .collect();
    let scales = [1.0, 1.0, width, 1.0, height, 1.0 / height];
    let base = Homography {
        h: [
            rng.random_range(0.8..1.2),
            rng.random_range(-0.2..0.2),
            rng.random_range(-10.0..10.0),
            rng.random_range(0.8..1.2),
            rng.random_range(-10.0..10.0),
            -1.0 / rng.random_range(vy - 60.0..vy - 10.0),
        ],
    };
    let z: Vec<f64> = base.h.iter().zip(scales).map(|(v, s)| v / s).collect();
    let to_h = |z: &[f64]| Homography {
        h: std::array::from_fn(|p| z[p] * scales[p]),
    };
    let (_, gh) = homography_opt::loss_and_grad(&base, &lanes)?;
    let gz: Vec<f64> = gh.iter().zip(scales).map(|(g, s)| g * s).collect();
    let f = |z: &[f64]| homography_opt::loss_and_grad(&to_h(z), &lanes).unwrap().0;
    Ok((check_gradient(f, &z, &gz, FD_STEP), 6))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_of_a_cubic() {
        let f = |x: &[f64]| x[0].powi(3) + 2.0 * x[1];
        let d = central_difference(f, &[2.0, 1.0], 0, 1e-5);
        assert!((d - 12.0).abs() < 1e-8);
        assert!(check_gradient(f, &[2.0, 1.0], &[12.0, 2.0], 1e-5) < 1e-8);
        assert!(check_gradient(f, &[2.0, 1.0], &[11.0, 2.0], 1e-5) > 1e-2);
    }

    #[test]
    fn all_losses_pass_at_random_points() {
        let report = run_gradcheck(20, 7, 1e-4).unwrap();
        for e in &report.entries {
            assert!(e.passed, "{}: {}", e.loss, e.max_rel_error);
            assert_eq!(e.points, 20);
        }
        assert_eq!(report.entries.len(), 8);
    }

    #[test]
    fn report_is_deterministic() {
        assert_eq!(
            run_gradcheck(3, 11, 1e-4).unwrap(),
            run_gradcheck(3, 11, 1e-4).unwrap()
        );
    }
}
