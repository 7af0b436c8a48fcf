use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::bias::BiasSettings;
use crate::error::{Error, Result};
use crate::format::{self, HEADER_LEN, RECORD_LEN};
use crate::manifest::{BiasGrid, DatasetManifest, ManifestEntry};
use crate::scenes::SceneSpec;
use crate::sim::{self, SimConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default)]
pub struct RecordOptions {
    /// Worker threads for grid points; `None` uses the global pool.
    pub parallel: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RecordReport {
    pub manifest: DatasetManifest,
    pub simulated: usize,
    pub skipped: usize,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one grid point, derived from the master seed and the tuple only,
/// so it does not depend on enumeration order or scheduling.
pub fn tuple_seed(master: u64, b: &BiasSettings) -> u64 {
    b.to_array()
        .iter()
        .fold(splitmix64(master), |h, &v| splitmix64(h ^ (v as i64 as u64)))
}

pub fn recording_file_name(b: &BiasSettings) -> PathBuf {
    format!(
        "rec_on{}_off{}_fo{}_hpf{}_refr{}.bbe",
        b.diff_on, b.diff_off, b.fo, b.hpf, b.refr
    )
    .into()
}

/// `true` when `path` holds a complete recording with the expected header.
fn is_complete(path: &Path, b: &BiasSettings, cfg: &SimConfig, seed: u64) -> Option<u64> {
    let h = format::load_header(path).ok()?;
    let len = fs::metadata(path).ok()?.len();
    let ok = h.width == cfg.width
        && h.height == cfg.height
        && h.duration == cfg.duration_us
        && h.seed == seed
        && h.biases == *b
        && len == HEADER_LEN as u64 + h.event_count * RECORD_LEN as u64;
    ok.then_some(h.event_count)
}

/// Simulates every tuple of `grid` into `out_dir` and writes the manifest.
/// Files that already exist with a matching header are kept. The simulator
/// limits are taken from the grid, so the high-pass is off on its lowest
/// `hpf` value.
pub fn record_grid(
    scene: &SceneSpec,
    scene_id: &str,
    grid: &BiasGrid,
    cfg: &SimConfig,
    out_dir: &Path,
    opts: &RecordOptions,
) -> Result<RecordReport> {
    grid.validate()?;
    fs::create_dir_all(out_dir).map_err(Error::io_at(out_dir))?;
    let mut cfg = cfg.clone();
    cfg.limits = grid.limits();
    cfg.validate()?;
    let field = scene.field();
    if field.width() != cfg.width || field.height() != cfg.height {
        return Err(Error::DimensionMismatch {
            scene_w: field.width(),
            scene_h: field.height(),
            sensor_w: cfg.width,
            sensor_h: cfg.height,
        });
    }

    let tuples: Vec<BiasSettings> = grid.tuples().collect();
    let simulated = AtomicUsize::new(0);
    let work = || {
        tuples
            .par_iter()
            .map(|b| {
                let seed = tuple_seed(cfg.seed, b);
                let file = recording_file_name(b);
                let path = out_dir.join(&file);
                let count = match is_complete(&path, b, &cfg, seed) {
                    Some(n) => n,
                    None => {
                        let mut c = cfg.clone();
                        c.seed = seed;
                        let mut rec = sim::simulate(field, b, &c).map_err(|e| Error::Simulation {
                            biases: *b,
                            reason: e.to_string(),
                        })?;
                        rec.scene_id = scene_id.to_string();
                        let tmp = path.with_extension("bbe.tmp");
                        format::save_recording(&rec, &tmp)?;
                        fs::rename(&tmp, &path).map_err(Error::io_at(&path))?;
                        simulated.fetch_add(1, Ordering::Relaxed);
                        rec.events.len() as u64
                    }
                };
                let mut entry = ManifestEntry {
                    biases: *b,
                    file,
                    duration: cfg.duration_us,
                    seed,
                    metrics: None,
                };
                entry.set_metric("er", count as f64 / (cfg.duration_us as f64 * 1e-6));
                Ok(entry)
            })
            .collect::<Result<Vec<_>>>()
    };
    let entries = match opts.parallel {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(work)?,
        None => work()?,
    };

    // keep metrics cached by an earlier run
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let previous = DatasetManifest::load(&manifest_path).ok();
    let mut entries = entries;
    if let Some(prev) = &previous {
        let index = prev.index();
        for e in &mut entries {
            if let Some(&i) = index.get(&e.biases) {
                let old = &prev.entries[i];
                if old.seed == e.seed {
                    for (k, v) in old.metrics.iter().flatten() {
                        e.set_metric(k, *v);
                    }
                }
            }
        }
    }

    let manifest = DatasetManifest {
        scene_id: scene_id.to_string(),
        grid: grid.clone(),
        entries,
        scene: Some(scene.clone()),
        sim: Some(cfg),
    };
    manifest.validate()?;
    manifest.save(&manifest_path)?;
    let simulated = simulated.into_inner();
    Ok(RecordReport {
        skipped: manifest.entries.len() - simulated,
        simulated,
        manifest,
    })
}
