use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anchoring::{AnchorParams, NmsParams};
use crate::error::{LaneError, Result};
use crate::eval::EvalParams;
use crate::losses::LossWeights;
use crate::repr::ImageSpec;
use crate::trainer::TrainerConfig;

/// Attention-map widths, pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PamSection {
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl Default for PamSection {
    fn default() -> Self {
        let t = TrainerConfig::default();
        Self {
            sigma_x: t.pam_sigma_x,
            sigma_y: t.pam_sigma_y,
        }
    }
}

/// Synthetic dataset generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub seed: u64,
    pub scenes: usize,
    pub min_lanes: usize,
    pub max_lanes: usize,
    pub noise_px: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            seed: 0,
            scenes: 20,
            min_lanes: 2,
            max_lanes: 5,
            noise_px: 2.0,
        }
    }
}

impl SynthSection {
    /// Lane count of the `k`-th scene: cycles through `min_lanes..=max_lanes`.
    pub fn lanes_for(&self, k: usize) -> usize {
        self.min_lanes + k % (self.max_lanes - self.min_lanes + 1)
    }

    pub fn scene_seed(&self, k: usize) -> u64 {
        self.seed.wrapping_add(k as u64)
    }
}

/// Trainer settings that are not shared with other sections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub final_lr_frac: f64,
    pub seed: u64,
    pub feature_scale: u32,
    pub feature_mask_width_px: f64,
    pub seg_mask_width_px: f64,
    pub ignore_px: f64,
    pub warmup_epochs: usize,
    pub init_scale: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainerConfig::default();
        Self {
            epochs: t.epochs,
            lr: t.lr,
            final_lr_frac: t.final_lr_frac,
            seed: t.seed,
            feature_scale: t.feature_scale,
            feature_mask_width_px: t.feature_mask_width_px,
            seg_mask_width_px: t.seg_mask_width_px,
            ignore_px: t.ignore_px,
            warmup_epochs: t.warmup_epochs,
            init_scale: t.init_scale,
        }
    }
}

/// The whole tool configuration, read from TOML. Every section and key is
/// optional and defaults as documented in the README; unknown keys are errors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub image: ImageSpec,
    pub anchor: AnchorParams,
    pub loss: LossWeights,
    pub nms: NmsParams,
    pub eval: EvalParams,
    pub pam: PamSection,
    pub synth: SynthSection,
    pub train: TrainSection,
}

/// Prefixes a bare key with its section so the error names the full path.
fn in_section(section: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        LaneError::InvalidParameter { key, reason } if !key.contains('.') => {
            LaneError::InvalidParameter {
                key: format!("{section}.{key}"),
                reason,
            }
        }
        other => other,
    })
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| LaneError::Parse {
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        in_section("image", self.image.validate())?;
        in_section("anchor", self.anchor.validate())?;
        self.loss.validate()?;
        let nms = &self.nms;
        if !(nms.dist_thresh_px >= 0.0) {
            return Err(LaneError::param("nms.dist_thresh_px", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&nms.conf_thresh) {
            return Err(LaneError::param("nms.conf_thresh", "must lie in [0, 1]"));
        }
        self.eval.validate()?;
        let s = &self.synth;
        if !(2..=8).contains(&s.min_lanes) {
            return Err(LaneError::param("synth.min_lanes", "must lie in 2..=8"));
        }
        if !(s.min_lanes..=8).contains(&s.max_lanes) {
            return Err(LaneError::param(
                "synth.max_lanes",
                "must lie in min_lanes..=8",
            ));
        }
        if !(s.noise_px >= 0.0 && s.noise_px.is_finite()) {
            return Err(LaneError::param(
                "synth.noise_px",
                "must be finite and >= 0",
            ));
        }
        if s.scenes == 0 {
            return Err(LaneError::param("synth.scenes", "must be >= 1"));
        }
        if !(self.pam.sigma_x > 0.0) {
            return Err(LaneError::param("pam.sigma_x", "must be > 0"));
        }
        if !(self.pam.sigma_y > 0.0) {
            return Err(LaneError::param("pam.sigma_y", "must be > 0"));
        }
        self.trainer_config().validate()
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        let t = &self.train;
        TrainerConfig {
            epochs: t.epochs,
            lr: t.lr,
            final_lr_frac: t.final_lr_frac,
            seed: t.seed,
            weights: self.loss,
            anchor: self.anchor,
            feature_scale: t.feature_scale,
            feature_mask_width_px: t.feature_mask_width_px,
            seg_mask_width_px: t.seg_mask_width_px,
            pam_sigma_x: self.pam.sigma_x,
            pam_sigma_y: self.pam.sigma_y,
            ignore_px: t.ignore_px,
            warmup_epochs: t.warmup_epochs,
            init_scale: t.init_scale,
        }
    }
}
