//! Vanishing-point guided anchoring: VP approximation and mask, anchor
//! generation, training-target assignment and Line-NMS.

mod anchors;
mod nms;
mod targets;
mod vp;

pub use anchors::{generate_anchors, Anchor, AnchorParams, AnchorSet};
pub use nms::{line_nms, proposal_distance, NmsParams, ScoredProposal};
pub use targets::{assign_targets, assignment_cost, AnchorTargets};
pub use vp::{
    approximate_vp, approximate_vp_with, grid_len, vp_mask, VanishingPoint, VpMask, VpMethod,
    PARALLEL_EPS,
};

/// Default radius of the vanishing-point mask, pixels.
pub const VP_RADIUS_PX: f64 = 16.0;
/// Default downsampling of the vanishing-point mask grid.
pub const VP_MASK_SCALE: u32 = 16;
