use std::io::Write;

use log::{debug, warn};
use ndarray::{Array1, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use super::scene::SyntheticScene;
use super::scorer::{extract_descriptor, ScorerParams};
use crate::anchoring::{
    assign_targets, assignment_cost, generate_anchors, vp_mask, AnchorParams, AnchorSet,
    AnchorTargets, VanishingPoint, VP_MASK_SCALE, VP_RADIUS_PX,
};
use crate::error::{LaneError, Result};
use crate::geometry::Point2;
use crate::losses::{keys, total_loss, LossInputs, LossWeights};
use crate::repr::{encode, ImageSpec};
use crate::structures::{
    attention_map, fit_bev_line_with_grad, modulate_features, rasterize_lanes, AttentionMap,
    BevFit, FeatureGrid, Homography, GT_MASK_WIDTH_PX,
};

/// Channels of the synthetic feature grid: x ramp, y ramp, lane mask, constant.
pub const FEATURE_CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Cosine decay of the step size down to `lr * final_lr_frac` at the last epoch.
    pub final_lr_frac: f64,
    pub seed: u64,
    pub weights: LossWeights,
    pub anchor: AnchorParams,
    /// Pixels per feature cell.
    pub feature_scale: u32,
    /// Stroke width of the lane-mask feature channel.
    pub feature_mask_width_px: f64,
    /// Stroke width of the segmentation target.
    pub seg_mask_width_px: f64,
    pub pam_sigma_x: f64,
    pub pam_sigma_y: f64,
    /// Unassigned anchors this close (mean px) to a lane are left out of the
    /// confidence term instead of being treated as negatives.
    pub ignore_px: f64,
    /// Epochs before the loss-monotonicity check starts.
    pub warmup_epochs: usize,
    pub init_scale: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 0.01,
            final_lr_frac: 0.01,
            seed: 0,
            weights: LossWeights::default(),
            anchor: AnchorParams::default(),
            feature_scale: 4,
            feature_mask_width_px: 8.0,
            seg_mask_width_px: GT_MASK_WIDTH_PX,
            pam_sigma_x: 80.0,
            pam_sigma_y: 45.0,
            ignore_px: 10.0,
            warmup_epochs: 50,
            init_scale: 0.01,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.anchor.validate()?;
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(LaneError::param("train.lr", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.final_lr_frac) {
            return Err(LaneError::param(
                "train.final_lr_frac",
                "must lie in [0, 1]",
            ));
        }
        if self.feature_scale == 0 {
            return Err(LaneError::param("train.feature_scale", "must be >= 1"));
        }
        for (key, v) in [
            ("train.feature_mask_width_px", self.feature_mask_width_px),
            ("train.seg_mask_width_px", self.seg_mask_width_px),
        ] {
            if !(v >= 1.0) {
                return Err(LaneError::param(key, "must be >= 1"));
            }
        }
        for (key, v) in [
            ("train.pam_sigma_x", self.pam_sigma_x),
            ("train.pam_sigma_y", self.pam_sigma_y),
        ] {
            if !(v > 0.0) {
                return Err(LaneError::param(key, "must be > 0"));
            }
        }
        if !(self.ignore_px >= 0.0) {
            return Err(LaneError::param("train.ignore_px", "must be >= 0"));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(LaneError::param(
                "train.init_scale",
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

/// Everything about a scene that stays fixed during training.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub spec: ImageSpec,
    pub rows: Vec<f64>,
    pub vp: VanishingPoint,
    pub homography: Homography,
    pub anchors: AnchorSet,
    pub targets: AnchorTargets,
    /// `n_anchors x (P * C')`.
    pub descriptors: Array2<f64>,
    /// Anchors that enter the confidence term.
    pub conf_included: Vec<bool>,
    /// Indices of positive anchors, and their rows of the tensors below.
    pub positives: Vec<usize>,
    pub pos_descriptors: Array2<f64>,
    pub pos_base: Array2<f64>,
    pub pos_gdx: Array2<f64>,
    pub pos_mask: Array2<bool>,
    pub vp_target: Array2<f64>,
    pub seg_target: Array2<f64>,
    pub pam: AttentionMap,
}

/// Fixed synthetic features for a scene, modulated by its lane mask.
pub fn scene_features(
    scene: &SyntheticScene,
    spec: &ImageSpec,
    cfg: &TrainerConfig,
) -> Result<FeatureGrid> {
    let mask = rasterize_lanes(
        &scene.lanes,
        spec,
        cfg.feature_scale,
        cfg.feature_mask_width_px,
    )?;
    let (rows, cols) = mask.grid.dim();
    let s = cfg.feature_scale as f64;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let data = Array3::from_shape_fn((rows, cols, FEATURE_CHANNELS), |(r, c, k)| match k {
        0 => (c as f64 + 0.5) * s / w,
        1 => (r as f64 + 0.5) * s / h,
        2 => mask.grid[[r, c]],
        _ => 1.0,
    });
    let f = FeatureGrid {
        data,
        scale: cfg.feature_scale,
    };
    // the oracle lane mask plays the role of the predicted segmentation here
    modulate_features(&f, &mask)
}

pub fn prepare_scene(
    scene: &SyntheticScene,
    spec: &ImageSpec,
    cfg: &TrainerConfig,
) -> Result<PreparedScene> {
    let rows = spec.rows();
    let vp = scene.vp_true;
    let anchors = generate_anchors(&vp, &cfg.anchor, spec)?;
    let gt = scene
        .lanes
        .iter()
        .map(|l| Ok((encode(l, spec)?, l.clone())))
        .collect::<Result<Vec<_>>>()?;
    let targets = assign_targets(&anchors, &gt)?;
    let features = scene_features(scene, spec, cfg)?;

    let dim = rows.len() * FEATURE_CHANNELS;
    let mut descriptors = Array2::zeros((anchors.len(), dim));
    for (mut row, a) in descriptors.outer_iter_mut().zip(&anchors.anchors) {
        row.assign(&Array1::from(extract_descriptor(&features, a, &rows)));
    }
    let conf_included: Vec<bool> = anchors
        .anchors
        .iter()
        .zip(&targets.gconf)
        .map(|(a, &pos)| {
            pos || scene
                .lanes
                .iter()
                .all(|l| assignment_cost(a, l) >= cfg.ignore_px)
        })
        .collect();

    let positives: Vec<usize> = targets.positives().collect();
    let pos_descriptors = descriptors.select(Axis(0), &positives);
    let pos_base = Array2::from_shape_fn((positives.len(), rows.len()), |(k, i)| {
        anchors.anchors[positives[k]].sampled_xs[i]
    });
    let pos_gdx = targets.gdx.select(Axis(0), &positives);
    let pos_mask = targets.valid.select(Axis(0), &positives);

    let vp_target = vp_mask(&vp, spec, VP_MASK_SCALE, VP_RADIUS_PX)?.grid;
    let seg_target =
        rasterize_lanes(&scene.lanes, spec, cfg.feature_scale, cfg.seg_mask_width_px)?.grid;
    let pam = attention_map(
        &vp,
        spec,
        cfg.feature_scale,
        cfg.pam_sigma_x,
        cfg.pam_sigma_y,
    )?;
    Ok(PreparedScene {
        spec: *spec,
        rows,
        vp,
        homography: scene.homography_true,
        anchors,
        targets,
        descriptors,
        conf_included,
        positives,
        pos_descriptors,
        pos_base,
        pos_gdx,
        pos_mask,
        vp_target,
        seg_target,
        pam,
    })
}

/// Per-scene logits of the directly parameterized VP and segmentation maps.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMaps {
    pub vp_logits: Array2<f64>,
    pub seg_logits: Array2<f64>,
}

impl SceneMaps {
    pub fn zeros(prep: &PreparedScene) -> Self {
        Self {
            vp_logits: Array2::zeros(prep.vp_target.dim()),
            seg_logits: Array2::zeros(prep.seg_target.dim()),
        }
    }
}

/// Confidence logits of every descriptor row.
pub(crate) fn conf_logits(descriptors: &Array2<f64>, params: &ScorerParams) -> Array1<f64> {
    let w = params.weights.column(0);
    let b = params.bias[0];
    descriptors
        .outer_iter()
        .map(|row| row.iter().zip(w.iter()).map(|(a, c)| a * c).sum::<f64>() + b)
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Objective value and gradients for a set of scenes.
#[derive(Debug, Clone)]
pub struct Objective {
    pub total: f64,
    /// Unweighted `[L_V, L_C, L_R, L_P, L_L, L_I]`, summed over scenes.
    pub components: [f64; 6],
    pub grad: ScorerParams,
    pub grad_maps: Vec<SceneMaps>,
}

/// Projects predicted positive lanes and fits their bird's-eye lines.
/// Each fit comes with `(row, d bev_x / d image_x)` for the rows it used.
type LaneFit = (BevFit, Vec<(usize, f64)>);

fn bev_fits(prep: &PreparedScene, xs: &Array2<f64>) -> Result<Vec<LaneFit>> {
    let mut out = Vec::with_capacity(xs.nrows());
    for k in 0..xs.nrows() {
        let mut pts = Vec::new();
        let mut dqdx = Vec::new();
        for (i, &y) in prep.rows.iter().enumerate() {
            if !prep.pos_mask[[k, i]] {
                continue;
            }
            let p = Point2::new(xs[[k, i]], y);
            let q = prep
                .homography
                .project_point(p)
                .ok_or(LaneError::HorizonSingularity {
                    index: i,
                    w: prep.homography.w_at(y),
                })?;
            pts.push(q);
            dqdx.push((i, prep.homography.d_project_dx(p).x));
        }
        out.push((fit_bev_line_with_grad(&pts)?, dqdx));
    }
    Ok(out)
}

/// Total loss of one scene with gradients for the scorer and the scene maps.
///
/// The confidence gradient is taken in logit space, `w_C (p - t)`, which
/// equals the chain rule through the clamped cross-entropy wherever the clamp
/// is inactive and keeps saturated mistakes trainable.
pub fn scene_objective(
    params: &ScorerParams,
    prep: &PreparedScene,
    maps: &SceneMaps,
    weights: &LossWeights,
) -> Result<(f64, [f64; 6], ScorerParams, SceneMaps)> {
    let p_count = prep.rows.len();
    let probs = conf_logits(&prep.descriptors, params).mapv(sigmoid);
    let included: Vec<usize> = (0..probs.len())
        .filter(|&k| prep.conf_included[k])
        .collect();
    let conf: Vec<f64> = included.iter().map(|&k| probs[k]).collect();
    let gconf: Vec<f64> = included
        .iter()
        .map(|&k| f64::from(u8::from(prep.targets.gconf[k])))
        .collect();

    let w_dx = params.weights.slice(ndarray::s![.., 1..]);
    let b_dx = params.bias.slice(ndarray::s![1..]);
    let dx = prep.pos_descriptors.dot(&w_dx) + b_dx;
    let xs = &prep.pos_base + &dx;
    let fits = bev_fits(prep, &xs)?;
    let lines: Vec<_> = fits.iter().map(|(f, _)| f.line).collect();

    let vp_pred = maps.vp_logits.mapv(sigmoid);
    let seg_pred = maps.seg_logits.mapv(sigmoid);
    let t = total_loss(
        &LossInputs {
            vp_pred: &vp_pred,
            vp_target: &prep.vp_target,
            conf: &conf,
            gconf: &gconf,
            dx: &dx,
            gdx: &prep.pos_gdx,
            reg_mask: &prep.pos_mask,
            base_xs: &prep.pos_base,
            rows: &prep.rows,
            pam: &prep.pam,
            seg_pred: &seg_pred,
            seg_target: &prep.seg_target,
            bev_lines: &lines,
        },
        weights,
    )?;

    // confidence logits
    let mut g_logit = Array1::zeros(probs.len());
    for (&k, (&p, &y)) in included.iter().zip(conf.iter().zip(&gconf)) {
        g_logit[k] = weights.conf * (p - y);
    }
    // offsets: regression and attention terms, then the parallelism term
    let mut g_dx = t
        .loss
        .gradient(keys::DX)
        .expect("dx gradient")
        .clone()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("2-d");
    if let Some(g_lines) = t.loss.gradient(keys::LINES) {
        for (k, (fit, dqdx)) in fits.iter().enumerate() {
            let dl_dphi = weights.lane
                * (g_lines[[k, 0]] * fit.dab_dphi[0] + g_lines[[k, 1]] * fit.dab_dphi[1]);
            for (d, &(i, dq)) in fit.dphi.iter().zip(dqdx) {
                g_dx[[k, i]] += dl_dphi * d[0] * dq;
            }
        }
    }

    let mut grad = ScorerParams::zeros(params.descriptor_dim(), p_count);
    // as a 1 x n product, which streams the descriptor rows in memory order
    let g_row = g_logit.view().insert_axis(Axis(0)).dot(&prep.descriptors);
    grad.weights.column_mut(0).assign(&g_row.row(0));
    grad.bias[0] = g_logit.sum();
    grad.weights
        .slice_mut(ndarray::s![.., 1..])
        .assign(&prep.pos_descriptors.t().dot(&g_dx));
    grad.bias
        .slice_mut(ndarray::s![1..])
        .assign(&g_dx.sum_axis(Axis(0)));

    let map_grad = |pred: &Array2<f64>, target: &Array2<f64>, w: f64| {
        let n = pred.len() as f64;
        (pred - target) * (w / n)
    };
    let maps_grad = SceneMaps {
        vp_logits: map_grad(&vp_pred, &prep.vp_target, weights.vp),
        seg_logits: map_grad(&seg_pred, &prep.seg_target, weights.pixel),
    };
    Ok((t.loss.value, t.components, grad, maps_grad))
}

/// Sum of [`scene_objective`] over scenes, in scene order.
pub fn objective(
    params: &ScorerParams,
    prepared: &[PreparedScene],
    maps: &[SceneMaps],
    weights: &LossWeights,
) -> Result<Objective> {
    let mut out = Objective {
        total: 0.0,
        components: [0.0; 6],
        grad: ScorerParams::zeros(params.descriptor_dim(), params.key_points()),
        grad_maps: Vec::with_capacity(prepared.len()),
    };
    for (prep, m) in prepared.iter().zip(maps) {
        let (total, comps, g, gm) = scene_objective(params, prep, m, weights)?;
        out.total += total;
        for (a, b) in out.components.iter_mut().zip(comps) {
            *a += b;
        }
        out.grad.weights += &g.weights;
        out.grad.bias += &g.bias;
        out.grad_maps.push(gm);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub l_v: f64,
    pub l_c: f64,
    pub l_r: f64,
    pub l_p: f64,
    pub l_l: f64,
    pub l_i: f64,
    pub total: f64,
    /// Loss above its value ten epochs earlier (after warmup).
    pub non_monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn flagged(&self) -> usize {
        self.rows.iter().filter(|r| r.non_monotone).count()
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "epoch",
            "L_V",
            "L_C",
            "L_R",
            "L_P",
            "L_L",
            "L_I",
            "total",
            "non_monotone",
        ])?;
        for r in &self.rows {
            let f = |v: f64| format!("{v:.9e}");
            w.write_record([
                r.epoch.to_string(),
                f(r.l_v),
                f(r.l_c),
                f(r.l_r),
                f(r.l_p),
                f(r.l_l),
                f(r.l_i),
                f(r.total),
                u8::from(r.non_monotone).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ScorerParams,
    pub maps: Vec<SceneMaps>,
    pub log: TrainingLog,
    pub prepared: Vec<PreparedScene>,
}

/// Adam moments for one flat parameter vector.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step<'a>(
        &mut self,
        t: i32,
        lr: f64,
        x: impl Iterator<Item = &'a mut f64>,
        g: impl Iterator<Item = &'a f64>,
    ) {
        let c1 = 1.0 - Self::B1.powi(t);
        let c2 = 1.0 - Self::B2.powi(t);
        for (((x, &g), m), v) in x.zip(g).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *x -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

fn step_size(cfg: &TrainerConfig, epoch: usize) -> f64 {
    let progress = epoch as f64 / cfg.epochs.saturating_sub(1).max(1) as f64;
    let floor = cfg.lr * cfg.final_lr_frac;
    floor + 0.5 * (cfg.lr - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Full-batch training of the scorer (and the per-scene maps) on `scenes`.
///
/// Every epoch evaluates the objective over all scenes in order, logs it and
/// takes one Adam step, so identical inputs give bit-identical results.
pub fn train(
    scenes: &[SyntheticScene],
    spec: &ImageSpec,
    cfg: &TrainerConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if scenes.is_empty() {
        return Err(LaneError::DegenerateInput(
            "no scenes to train on".to_string(),
        ));
    }
    let prepared = scenes
        .iter()
        .map(|s| prepare_scene(s, spec, cfg))
        .collect::<Result<Vec<_>>>()?;
    train_prepared(prepared, cfg)
}

pub fn train_prepared(prepared: Vec<PreparedScene>, cfg: &TrainerConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let Some(first) = prepared.first() else {
        return Err(LaneError::DegenerateInput(
            "no scenes to train on".to_string(),
        ));
    };
    let p = first.rows.len();
    let mut params = ScorerParams::random(p * FEATURE_CHANNELS, p, cfg.init_scale, cfg.seed);
    let mut maps: Vec<SceneMaps> = prepared.iter().map(SceneMaps::zeros).collect();
    let mut adam_params = Adam::new(params.len());
    let mut adam_maps: Vec<(Adam, Adam)> = maps
        .iter()
        .map(|m| (Adam::new(m.vp_logits.len()), Adam::new(m.seg_logits.len())))
        .collect();

    let mut log = TrainingLog::default();
    for epoch in 0..cfg.epochs {
        let obj = objective(&params, &prepared, &maps, &cfg.weights)?;
        if !obj.total.is_finite() {
            return Err(LaneError::DivergedTraining {
                epoch,
                reason: format!("loss became {}", obj.total),
            });
        }
        let non_monotone = epoch >= cfg.warmup_epochs + 10
            && obj.total > log.rows[epoch - 10].total * (1.0 + 1e-12);
        if non_monotone {
            debug!("epoch {epoch}: loss {} above ten epochs earlier", obj.total);
        }
        let c = obj.components;
        log.rows.push(LogRow {
            epoch,
            l_v: c[0],
            l_c: c[1],
            l_r: c[2],
            l_p: c[3],
            l_l: c[4],
            l_i: c[5],
            total: obj.total,
            non_monotone,
        });

        let t = (epoch + 1) as i32;
        let lr = step_size(cfg, epoch);
        adam_params.step(
            t,
            lr,
            params.weights.iter_mut().chain(params.bias.iter_mut()),
            obj.grad.weights.iter().chain(obj.grad.bias.iter()),
        );
        for ((m, g), (av, aseg)) in maps.iter_mut().zip(&obj.grad_maps).zip(&mut adam_maps) {
            av.step(t, lr, m.vp_logits.iter_mut(), g.vp_logits.iter());
            aseg.step(t, lr, m.seg_logits.iter_mut(), g.seg_logits.iter());
        }
        if !params.is_finite() {
            return Err(LaneError::DivergedTraining {
                epoch,
                reason: "non-finite parameters".to_string(),
            });
        }
    }
    if log.flagged() > 0 {
        warn!("{} epochs flagged as non-monotone", log.flagged());
    }
    Ok(TrainOutput {
        params,
        maps,
        log,
        prepared,
    })
}
