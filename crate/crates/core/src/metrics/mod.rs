//! Recording quality metrics: blob tracking, LED frequency fits, event-rate
//! heat maps and trajectory APE.

mod ape;
mod frequency;
mod heatmap;
mod tracking;

pub use ape::{compute_ape, AlignMode, TrajectoryError};
pub use frequency::{
    board_rfu_report, fit_cosine, fit_frequency, led_bin_us, rfu, BoardReport, FrequencyFit, RFU_CLIP,
};
pub use heatmap::{metric_heatmap, write_heatmap, Heatmap};
pub use tracking::{
    blobs, dot_tracking, track_spatters, tracking_metrics, Roi, TrackerConfig, TrackingMetrics, Tracklet,
};
