//! Annotation formats, configuration, dataset indexing and overlay rendering.

mod config;
mod culane;
mod dataset;
mod render;
mod tusimple;

pub use config::{Config, PamSection, SynthSection, TrainSection};
pub use culane::{parse_culane, resample_to_grid, serialize_culane};
pub use dataset::{entry_lanes, Annotation, DatasetEntry, DatasetIndex, CULANE_SUFFIX};
pub use render::{
    draw_overlay, render_overlay, Canvas, Rgb, ANCHOR_COLOR, BACKGROUND, PALETTE, VP_COLOR,
    VP_DISC_RADIUS_PX,
};
pub use tusimple::{
    lane_from_samples, parse_tusimple, parse_tusimple_file, parse_tusimple_record, record_lanes,
    serialize_tusimple, TuSimpleLanes, TuSimpleRecord,
};
