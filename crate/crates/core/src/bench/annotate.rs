use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::event_rate;
use crate::format;
use crate::manifest::DatasetManifest;
use crate::metrics::{board_rfu_report, dot_tracking};
use crate::scenes::SceneSpec;

/// Metric families that can be cached per manifest entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// `er`
    Er,
    /// `tf`, `tl`, `n_tracklets`; spinning-dot corpora only.
    Tracking,
    /// `mean_rfu`, `max_rfu`, `rfu_valid`; LED-board corpora only.
    Rfu,
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "er" => Ok(MetricKind::Er),
            "tracking" => Ok(MetricKind::Tracking),
            "rfu" => Ok(MetricKind::Rfu),
            _ => Err(Error::UnknownMetric(s.to_string())),
        }
    }
}

/// Computes `kind` for every entry from its recording under `root` and
/// stores the values in the entry's metric cache.
pub fn annotate_manifest(manifest: &mut DatasetManifest, root: &Path, kind: MetricKind) -> Result<()> {
    let scene = manifest.scene.clone();
    match (kind, &scene) {
        (MetricKind::Er, _) => {}
        (MetricKind::Tracking, Some(SceneSpec::SpinningDot(_))) | (MetricKind::Rfu, Some(SceneSpec::LedBoard(_))) => {}
        _ => {
            return Err(Error::InvalidArgument(format!(
                "{kind:?} metrics need a matching scene in the manifest, found {:?}",
                scene.as_ref().map(SceneSpec::kind)
            )))
        }
    }
    let values: Vec<Vec<(&'static str, f64)>> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let rec = format::load_recording(&root.join(&e.file))?;
            Ok(match (kind, &scene) {
                (MetricKind::Tracking, Some(SceneSpec::SpinningDot(s))) => {
                    let m = dot_tracking(&rec, s)?;
                    vec![("tf", m.tf as f64), ("tl", m.tl), ("n_tracklets", m.n_tracklets as f64)]
                }
                (MetricKind::Rfu, Some(SceneSpec::LedBoard(s))) => {
                    let r = board_rfu_report(&rec, s)?;
                    vec![
                        ("mean_rfu", r.mean_rfu),
                        ("max_rfu", r.max_rfu),
                        ("rfu_valid", if r.valid { 1.0 } else { 0.0 }),
                    ]
                }
                _ => vec![("er", event_rate(&rec)?)],
            })
        })
        .collect::<Result<_>>()?;
    for (e, vals) in manifest.entries.iter_mut().zip(values) {
        for (k, v) in vals {
            e.set_metric(k, v);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_kind() {
        assert_eq!("tracking".parse::<MetricKind>().unwrap(), MetricKind::Tracking);
        assert!(matches!("ape".parse::<MetricKind>(), Err(Error::UnknownMetric(_))));
    }
}
