//! Desk-scale end-to-end exercise of the losses.
//!
//! Scenes come from a generator with a known camera homography. The backbone
//! is replaced by a fixed feature grid (x ramp, y ramp, rasterized lane mask,
//! constant), modulated by the ground-truth lane mask rather than a predicted
//! one. A single linear map scores anchor descriptors. The VP and segmentation
//! branches are free per-scene logit grids, so their losses are exercised
//! without a network behind them.

mod pipeline;
mod scene;
mod scorer;
mod train;

pub use pipeline::{anchor_confidences, evaluate_predictions, predict_lanes, scene_proposals};
pub use scene::{generate_scene, SyntheticScene, HORIZON_MARGIN_PX};
pub use scorer::{extract_descriptor, ScorerParams};
pub use train::{
    objective, prepare_scene, scene_features, scene_objective, train, train_prepared, LogRow,
    Objective, PreparedScene, SceneMaps, TrainOutput, TrainerConfig, TrainingLog, FEATURE_CHANNELS,
};
