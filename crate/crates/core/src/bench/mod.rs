//! Grid construction, corpus recording and the file-swap MDP environment.

mod annotate;
mod env;
mod grid;
mod record;

pub use annotate::{annotate_manifest, MetricKind};
pub use env::{MdpEnv, Observation, DEFAULT_WINDOW_US};
pub use grid::{
    build_axis, build_grid, build_grid_with, snap_to_grid, AxisRange, GridPreset, GridRounding, GridSpec,
};
pub use record::{record_grid, recording_file_name, tuple_seed, RecordOptions, RecordReport, MANIFEST_FILE};

use crate::error::{Error, Result};
use crate::manifest::DatasetManifest;

/// Fraction of grid tuples whose cached `metric` satisfies `valid`.
pub fn validity_summary(manifest: &DatasetManifest, metric: &str, valid: impl Fn(f64) -> bool) -> Result<f64> {
    if manifest.entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut n = 0usize;
    for e in &manifest.entries {
        let v = e
            .metric(metric)
            .ok_or_else(|| Error::MissingMetric(e.biases, metric.to_string()))?;
        n += usize::from(valid(v));
    }
    Ok(n as f64 / manifest.entries.len() as f64)
}
