use thiserror::Error;

pub type Result<T> = std::result::Result<T, LaneError>;

#[derive(Debug, Error)]
pub enum LaneError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    /// The best-fit long axis of a lane is horizontal, so `x = f(y)` is undefined.
    #[error("center line is horizontal (a = 0); lane cannot be parameterized per row")]
    CollinearHorizontal,
    #[error("invalid lane: {0}")]
    InvalidLane(String),
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no usable intersections: every pair of center lines is near-parallel")]
    NoIntersections,
    #[error("cannot assign {gts} ground-truth lanes to {anchors} anchors")]
    AssignmentOverflow { gts: usize, anchors: usize },
    #[error("point {index} lies on the projective horizon (w = {w:e})")]
    HorizonSingularity { index: usize, w: f64 },
    #[error("homography is singular (|det| = {0:e})")]
    SingularHomography(f64),
    #[error("optimization diverged after {steps} steps")]
    DivergedOptimization { steps: usize },
    #[error("training diverged at epoch {epoch}: {reason}")]
    DivergedTraining { epoch: usize, reason: String },
    #[error("lane rasterizes to zero pixels")]
    EmptyRaster,
    #[error("row grids differ: {0}")]
    RowGridMismatch(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl LaneError {
    pub(crate) fn param(key: impl Into<String>, reason: impl Into<String>) -> Self {
        LaneError::InvalidParameter {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by malformed input data rather than violated invariants.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            LaneError::Parse { .. }
                | LaneError::Io(_)
                | LaneError::Json(_)
                | LaneError::Csv(_)
                | LaneError::RowGridMismatch(_)
        )
    }
}
