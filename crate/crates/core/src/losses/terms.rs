use ndarray::{Array1, Array2};

use super::{keys, LossFlag, LossValue, LossWeights};
use crate::error::{LaneError, Result};
use crate::structures::{AttentionMap, BevLine};

/// Predictions are clamped to `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

fn bce_term(p: f64, t: f64) -> (f64, f64) {
    let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    let value = -(t * pc.ln() + (1.0 - t) * (1.0 - pc).ln());
    let grad = if p == pc {
        (pc - t) / (pc * (1.0 - pc))
    } else {
        0.0
    };
    (value, grad)
}

fn check_shape(what: &str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(LaneError::ShapeMismatch(format!("{what}: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// Mean binary cross-entropy over the cells of a dense mask.
pub fn bce_mask_loss(pred: &Array2<f64>, target: &Array2<f64>) -> Result<LossValue> {
    check_shape("bce_mask_loss", pred.shape(), target.shape())?;
    let n = pred.len().max(1) as f64;
    let mut value = 0.0;
    let mut grad = Array2::zeros(pred.dim());
    for ((g, &p), &t) in grad.iter_mut().zip(pred.iter()).zip(target.iter()) {
        let (v, d) = bce_term(p, t);
        value += v;
        *g = d / n;
    }
    Ok(LossValue {
        value: value / n,
        gradients: [(keys::PRED.to_string(), grad.into_dyn())].into(),
        flags: vec![],
    })
}

/// Summed binary cross-entropy of per-proposal confidences.
pub fn confidence_loss(conf: &[f64], gconf: &[f64]) -> Result<LossValue> {
    check_shape("confidence_loss", &[conf.len()], &[gconf.len()])?;
    let mut value = 0.0;
    let mut grad = Array1::zeros(conf.len());
    for (i, (&p, &t)) in conf.iter().zip(gconf).enumerate() {
        let (v, d) = bce_term(p, t);
        value += v;
        grad[i] = d;
    }
    Ok(LossValue {
        value,
        gradients: [(keys::CONF.to_string(), grad.into_dyn())].into(),
        flags: vec![],
    })
}

pub fn smooth_l1(d: f64) -> f64 {
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

pub fn smooth_l1_grad(d: f64) -> f64 {
    if d.abs() < 1.0 {
        d
    } else {
        d.signum()
    }
}

/// L1 subgradient with `0` at `0`.
fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Summed smooth-L1 of `dx - gdx` over the entries where `mask` is set
/// (positive proposals, valid rows).
pub fn regression_loss(
    dx: &Array2<f64>,
    gdx: &Array2<f64>,
    mask: &Array2<bool>,
) -> Result<LossValue> {
    check_shape("regression_loss dx/gdx", dx.shape(), gdx.shape())?;
    check_shape("regression_loss dx/mask", dx.shape(), mask.shape())?;
    let mut value = 0.0;
    let mut grad = Array2::zeros(dx.dim());
    for (((g, &d), &t), &m) in grad.iter_mut().zip(dx).zip(gdx).zip(mask) {
        if m {
            value += smooth_l1(d - t);
            *g = smooth_l1_grad(d - t);
        }
    }
    Ok(LossValue {
        value,
        gradients: [(keys::DX.to_string(), grad.into_dyn())].into(),
        flags: vec![],
    })
}

/// `sum_{i != j} |a_i b_j - a_j b_i|` over ordered pairs of bird's-eye lines.
///
/// The gradient is taken with respect to the raw `(a, b, c)` triples, shape
/// `[n, 3]`. With fewer than two lines the loss is zero and flagged.
pub fn parallelism_loss(lines: &[BevLine]) -> LossValue {
    let n = lines.len();
    let mut grad = Array2::zeros((n, 3));
    let mut value = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (li, lj) = (&lines[i], &lines[j]);
            let r = li.a * lj.b - lj.a * li.b;
            value += r.abs();
            let s = sign0(r);
            grad[[i, 0]] += s * lj.b;
            grad[[j, 1]] += s * li.a;
            grad[[j, 0]] -= s * li.b;
            grad[[i, 1]] -= s * lj.a;
        }
    }
    LossValue {
        value,
        gradients: [(keys::LINES.to_string(), grad.into_dyn())].into(),
        flags: if n < 2 {
            vec![LossFlag::TooFewLanes]
        } else {
            vec![]
        },
    }
}

/// `sum |x_pred - x_gt| * (1 + E(x_gt, y))` over masked entries, with `E`
/// sampled bilinearly from the attention map at the ground-truth point.
pub fn attention_regression_loss(
    xs_pred: &Array2<f64>,
    xs_gt: &Array2<f64>,
    mask: &Array2<bool>,
    rows: &[f64],
    pam: &AttentionMap,
) -> Result<LossValue> {
    check_shape(
        "attention_regression_loss pred/gt",
        xs_pred.shape(),
        xs_gt.shape(),
    )?;
    check_shape(
        "attention_regression_loss pred/mask",
        xs_pred.shape(),
        mask.shape(),
    )?;
    check_shape(
        "attention_regression_loss rows",
        &[xs_pred.ncols()],
        &[rows.len()],
    )?;
    let mut value = 0.0;
    let mut grad = Array2::zeros(xs_pred.dim());
    for ((k, i), &m) in mask.indexed_iter() {
        if !m {
            continue;
        }
        let xg = xs_gt[[k, i]];
        let weight = 1.0 + pam.sample(xg, rows[i]).abs();
        let r = xs_pred[[k, i]] - xg;
        value += r.abs() * weight;
        grad[[k, i]] = sign0(r) * weight;
    }
    Ok(LossValue {
        value,
        gradients: [(keys::XS_PRED.to_string(), grad.into_dyn())].into(),
        flags: vec![],
    })
}

/// Everything the total objective reads.
///
/// `dx` is shared by the regression and attention terms: the attention term
/// compares `base_xs + dx` with `base_xs + gdx`.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub vp_pred: &'a Array2<f64>,
    pub vp_target: &'a Array2<f64>,
    pub conf: &'a [f64],
    pub gconf: &'a [f64],
    pub dx: &'a Array2<f64>,
    pub gdx: &'a Array2<f64>,
    pub reg_mask: &'a Array2<bool>,
    pub base_xs: &'a Array2<f64>,
    pub rows: &'a [f64],
    pub pam: &'a AttentionMap,
    pub seg_pred: &'a Array2<f64>,
    pub seg_target: &'a Array2<f64>,
    pub bev_lines: &'a [BevLine],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotalLoss {
    /// Weighted sum, with gradients for `vp_pred`, `conf`, `dx`, `seg_pred`, `lines`.
    pub loss: LossValue,
    /// Unweighted `[L_V, L_C, L_R, L_P, L_L, L_I]`.
    pub components: [f64; 6],
}

fn renamed(mut v: LossValue, from: &str, to: &str) -> LossValue {
    if let Some(g) = v.gradients.remove(from) {
        v.gradients.insert(to.to_string(), g);
    }
    v
}

pub fn total_loss(inputs: &LossInputs<'_>, weights: &LossWeights) -> Result<TotalLoss> {
    weights.validate()?;
    let l_v = renamed(
        bce_mask_loss(inputs.vp_pred, inputs.vp_target)?,
        keys::PRED,
        keys::VP_PRED,
    );
    let l_c = confidence_loss(inputs.conf, inputs.gconf)?;
    let l_r = regression_loss(inputs.dx, inputs.gdx, inputs.reg_mask)?;
    let l_p = renamed(
        bce_mask_loss(inputs.seg_pred, inputs.seg_target)?,
        keys::PRED,
        keys::SEG_PRED,
    );
    let l_l = parallelism_loss(inputs.bev_lines);
    check_shape(
        "total_loss base_xs",
        inputs.base_xs.shape(),
        inputs.dx.shape(),
    )?;
    let xs_pred = inputs.base_xs + inputs.dx;
    let xs_gt = inputs.base_xs + inputs.gdx;
    let l_i = renamed(
        attention_regression_loss(&xs_pred, &xs_gt, inputs.reg_mask, inputs.rows, inputs.pam)?,
        keys::XS_PRED,
        keys::DX,
    );

    let terms = [&l_v, &l_c, &l_r, &l_p, &l_l, &l_i];
    let mut loss = LossValue::default();
    for (term, w) in terms.iter().zip(weights.as_array()) {
        loss.accumulate(term, w)?;
    }
    Ok(TotalLoss {
        components: terms.map(|t| t.value),
        loss,
    })
}
