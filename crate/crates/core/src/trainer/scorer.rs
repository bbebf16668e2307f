use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::anchoring::Anchor;
use crate::error::{LaneError, Result};
use crate::structures::FeatureGrid;

const MAGIC: &[u8; 8] = b"LANESCR\0";
const VERSION: u32 = 1;

/// Linear map from an anchor descriptor to `[conf logit, dx_0 .. dx_{P-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    /// `descriptor_dim x (1 + P)`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ScorerParams {
    pub fn zeros(descriptor_dim: usize, key_points: usize) -> Self {
        Self {
            weights: Array2::zeros((descriptor_dim, 1 + key_points)),
            bias: Array1::zeros(1 + key_points),
        }
    }

    /// Small Gaussian weights, zero bias.
    pub fn random(descriptor_dim: usize, key_points: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale.abs()).expect("finite scale");
        Self {
            weights: Array2::from_shape_simple_fn((descriptor_dim, 1 + key_points), || {
                normal.sample(&mut rng)
            }),
            bias: Array1::zeros(1 + key_points),
        }
    }

    pub fn descriptor_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn key_points(&self) -> usize {
        self.bias.len() - 1
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.bias.iter())
            .all(|v| v.is_finite())
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Weights row-major, then bias.
    pub fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .chain(self.bias.iter())
            .copied()
            .collect()
    }

    pub fn from_flat(&self, flat: &[f64]) -> Self {
        let n = self.weights.len();
        Self {
            weights: Array2::from_shape_vec(self.weights.dim(), flat[..n].to_vec()).expect("shape"),
            bias: Array1::from(flat[n..].to_vec()),
        }
    }

    /// Little-endian blob: magic, version, dims, then the values as f64.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.descriptor_dim() as u64).to_le_bytes())?;
        out.write_all(&(self.key_points() as u64).to_le_bytes())?;
        for v in self.flat() {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let bad = |m: &str| LaneError::Parse {
            line: 0,
            message: format!("scorer blob: {m}"),
        };
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u4 = [0u8; 4];
        input.read_exact(&mut u4)?;
        let version = u32::from_le_bytes(u4);
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let mut u8b = [0u8; 8];
        input.read_exact(&mut u8b)?;
        let dim = u64::from_le_bytes(u8b) as usize;
        input.read_exact(&mut u8b)?;
        let p = u64::from_le_bytes(u8b) as usize;
        if dim == 0 || p == 0 || dim.saturating_mul(p + 1) > 1 << 28 {
            return Err(bad("implausible dimensions"));
        }
        let shape = Self::zeros(dim, p);
        let mut flat = Vec::with_capacity(shape.len());
        for _ in 0..shape.len() {
            input.read_exact(&mut u8b)?;
            flat.push(f64::from_le_bytes(u8b));
        }
        let out = shape.from_flat(&flat);
        if !out.is_finite() {
            return Err(bad("non-finite values"));
        }
        Ok(out)
    }
}

/// Bilinear samples of every channel at each of the anchor's row points,
/// concatenated row by row (`P * C'` values).
pub fn extract_descriptor(f: &FeatureGrid, anchor: &Anchor, rows: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * f.channels());
    for (&x, &y) in anchor.sampled_xs.iter().zip(rows) {
        f.sample_into(x, y, &mut out);
    }
    out
}
