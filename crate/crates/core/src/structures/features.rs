use ndarray::Array3;

use super::attention::axis_weights;
use super::raster::PixelMask;
use crate::error::{LaneError, Result};

/// `rows x cols x channels` feature map on a grid of `scale`-pixel cells.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub data: Array3<f64>,
    pub scale: u32,
}

impl FeatureGrid {
    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    /// Bilinear sample of every channel at image point `(x, y)`, clamped at the
    /// borders. Appends to `out`.
    pub fn sample_into(&self, x: f64, y: f64, out: &mut Vec<f64>) {
        let (rows, cols, ch) = self.data.dim();
        let s = self.scale as f64;
        let (r0, r1, fr) = axis_weights(y / s - 0.5, rows);
        let (c0, c1, fc) = axis_weights(x / s - 0.5, cols);
        let w = [
            (r0, c0, (1.0 - fr) * (1.0 - fc)),
            (r0, c1, (1.0 - fr) * fc),
            (r1, c0, fr * (1.0 - fc)),
            (r1, c1, fr * fc),
        ];
        for k in 0..ch {
            out.push(w.iter().map(|&(r, c, wt)| self.data[[r, c, k]] * wt).sum());
        }
    }
}

/// `M = F * P + F`: every channel of `f` scaled by `1 + p` cell-wise.
pub fn modulate_features(f: &FeatureGrid, p: &PixelMask) -> Result<FeatureGrid> {
    let (rows, cols, _) = f.data.dim();
    if p.grid.dim() != (rows, cols) {
        return Err(LaneError::ShapeMismatch(format!(
            "features are {rows}x{cols}, mask is {:?}",
            p.grid.dim()
        )));
    }
    let mut data = f.data.clone();
    for ((r, c, _), v) in data.indexed_iter_mut() {
        *v *= 1.0 + p.grid[[r, c]];
    }
    Ok(FeatureGrid {
        data,
        scale: f.scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng) -> (FeatureGrid, PixelMask) {
        let f = FeatureGrid {
            data: Array3::from_shape_fn((4, 5, 3), |_| rng.random_range(-2.0..2.0)),
            scale: 1,
        };
        let p = PixelMask {
            grid: Array2::from_shape_fn((4, 5), |_| rng.random_range(0.0..1.0)),
            scale: 1,
        };
        (f, p)
    }

    #[test]
    fn zero_and_one_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (f, mut p) = random(&mut rng);
        p.grid.fill(0.0);
        assert_eq!(modulate_features(&f, &p).unwrap(), f);
        p.grid.fill(1.0);
        assert_eq!(modulate_features(&f, &p).unwrap().data, &f.data * 2.0);
    }

    #[test]
    fn elementwise_recompute_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (f, p) = random(&mut rng);
        let m = modulate_features(&f, &p).unwrap();
        for r in 0..4 {
            for c in 0..5 {
                for k in 0..3 {
                    let expect = f.data[[r, c, k]] * p.grid[[r, c]] + f.data[[r, c, k]];
                    assert!((m.data[[r, c, k]] - expect).abs() < 1e-12);
                }
            }
        }
        let (g, _) = random(&mut rng);
        let sum = FeatureGrid {
            data: &f.data * 2.0 + &g.data,
            scale: 1,
        };
        let lhs = modulate_features(&sum, &p).unwrap().data;
        let rhs = &m.data * 2.0 + &modulate_features(&g, &p).unwrap().data;
        assert!(lhs
            .iter()
            .zip(rhs.iter())
            .all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (f, _) = random(&mut rng);
        let p = PixelMask {
            grid: Array2::zeros((4, 4)),
            scale: 1,
        };
        assert!(matches!(
            modulate_features(&f, &p),
            Err(LaneError::ShapeMismatch(_))
        ));
    }
}
