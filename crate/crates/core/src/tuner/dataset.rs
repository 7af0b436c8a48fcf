use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::expert::{scripted_expert, OptimalRange};
use super::features::{extract_features, FeatureConfig, FeatureVector};
use crate::bias::{BiasAction, BiasSettings};
use crate::error::{Error, Result};
use crate::format;
use crate::frame::accumulate;
use crate::manifest::DatasetManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Annotator {
    Scripted,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub features: FeatureVector,
    pub action: BiasAction,
    pub biases: BiasSettings,
    pub scene_id: String,
    pub annotator: Annotator,
}

/// `n_samples` scripted demonstrations on uniformly drawn grid tuples and
/// windows. Recordings are resolved relative to `root`.
pub fn build_demo_dataset(
    manifest: &DatasetManifest,
    root: &Path,
    range: &OptimalRange,
    max_step: i32,
    n_samples: usize,
    seed: u64,
    features: &FeatureConfig,
) -> Result<Vec<Demonstration>> {
    if n_samples == 0 {
        return Ok(Vec::new());
    }
    manifest.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // draw every sample first so the result does not depend on scheduling
    let mut by_entry: BTreeMap<usize, Vec<(usize, u64)>> = BTreeMap::new();
    for i in 0..n_samples {
        let e = rng.random_range(0..manifest.entries.len());
        let duration = manifest.entries[e].duration;
        if duration < features.window_us {
            return Err(Error::WindowOutOfRange {
                start: 0,
                length: features.window_us,
                duration,
            });
        }
        let start = rng.random_range(0..=duration - features.window_us);
        by_entry.entry(e).or_default().push((i, start));
    }
    let groups: Vec<(usize, Vec<(usize, u64)>)> = by_entry.into_iter().collect();
    let made: Vec<Vec<(usize, Demonstration)>> = groups
        .par_iter()
        .map(|(e, draws)| {
            let entry = &manifest.entries[*e];
            let mut rec = format::load_recording(&root.join(&entry.file))?;
            rec.scene_id = manifest.scene_id.clone();
            let action = scripted_expert(&entry.biases, range, max_step);
            draws
                .iter()
                .map(|&(i, start)| {
                    let frame = accumulate(&rec, start, features.window_us)?;
                    Ok((
                        i,
                        Demonstration {
                            features: extract_features(&frame, features)?,
                            action,
                            biases: entry.biases,
                            scene_id: manifest.scene_id.clone(),
                            annotator: Annotator::Scripted,
                        },
                    ))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<(usize, Demonstration)> = made.into_iter().flatten().collect();
    out.sort_by_key(|(i, _)| *i);
    Ok(out.into_iter().map(|(_, d)| d).collect())
}

/// One JSON object per line.
pub fn save_demonstrations(demos: &[Demonstration], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(Error::io_at(path))?;
    let mut w = BufWriter::new(f);
    for d in demos {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n").map_err(Error::io_at(path))?;
    }
    w.flush().map_err(Error::io_at(path))?;
    Ok(())
}

pub fn load_demonstrations(path: &Path) -> Result<Vec<Demonstration>> {
    let f = File::open(path).map_err(Error::io_at(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(Error::io_at(path))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
