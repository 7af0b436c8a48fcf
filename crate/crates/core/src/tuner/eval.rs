use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::expert::{scripted_expert, OptimalRange};
use super::features::{extract_features, FeatureConfig};
use super::policy::PolicyModel;
use crate::bench::MdpEnv;
use crate::bias::{BiasAction, BiasAxis, BiasSettings};
use crate::error::{Error, Result};
use crate::frame::{accumulate, AccumulatedFrame};
use crate::metrics::{dot_tracking, Heatmap};
use crate::scenes::SpinningDotScene;

/// Anything that proposes a threshold change from an observation.
pub trait TuningPolicy {
    fn propose(&self, biases: &BiasSettings, frame: &AccumulatedFrame) -> Result<BiasAction>;
}

/// A trained model with the feature pipeline it was trained on.
#[derive(Debug, Clone)]
pub struct LearnedPolicy {
    pub model: PolicyModel,
    pub features: FeatureConfig,
}

impl TuningPolicy for LearnedPolicy {
    fn propose(&self, _biases: &BiasSettings, frame: &AccumulatedFrame) -> Result<BiasAction> {
        let f = extract_features(frame, &self.features)?;
        self.model.act(&f.values)
    }
}

/// The scripted expert; it reads the biases and ignores the frame.
#[derive(Debug, Clone, Copy)]
pub struct ExpertPolicy {
    pub range: OptimalRange,
    pub max_step: i32,
}

impl TuningPolicy for ExpertPolicy {
    fn propose(&self, biases: &BiasSettings, _frame: &AccumulatedFrame) -> Result<BiasAction> {
        Ok(scripted_expert(biases, &self.range, self.max_step))
    }
}

/// Mean `|Δoff| + |Δon|` proposed on `samples` random windows of every
/// recording, averaged per `(diff_off, diff_on)` cell.
pub fn convergence_map(
    policy: &dyn TuningPolicy,
    env: &mut MdpEnv,
    samples: usize,
    seed: u64,
) -> Result<Heatmap> {
    if samples == 0 {
        return Err(Error::InvalidArgument("convergence map needs at least one sample per cell".into()));
    }
    let manifest = env.manifest().clone();
    let window = env.window_us();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums: HashMap<(i32, i32), (f64, usize)> = HashMap::new();
    for entry in &manifest.entries {
        let rec = env.recording(&entry.biases)?;
        if rec.duration < window {
            return Err(Error::WindowOutOfRange {
                start: 0,
                length: window,
                duration: rec.duration,
            });
        }
        let cell = sums.entry((entry.biases.diff_off, entry.biases.diff_on)).or_insert((0.0, 0));
        for _ in 0..samples {
            let start = rng.random_range(0..=rec.duration - window);
            let frame = accumulate(&rec, start, window)?;
            cell.0 += policy.propose(&entry.biases, &frame)?.l1() as f64;
            cell.1 += 1;
        }
    }
    let mut map = Heatmap::new(
        "sum_abs_action",
        BiasAxis::DiffOff,
        BiasAxis::DiffOn,
        manifest.grid.axis(BiasAxis::DiffOff).to_vec(),
        manifest.grid.axis(BiasAxis::DiffOn).to_vec(),
    );
    for ((x, y), (s, n)) in sums {
        let ix = map.x_values.iter().position(|&v| v == x).expect("grid member");
        let iy = map.y_values.iter().position(|&v| v == y).expect("grid member");
        map.cells[iy][ix] = s / n as f64;
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerRun {
    pub action: BiasAction,
    pub landed: BiasSettings,
    pub tl: f64,
    pub in_range: bool,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerExperiment {
    pub start: BiasSettings,
    pub runs: Vec<TrackerRun>,
    pub success_rate: f64,
}

impl TrackerExperiment {
    /// Mean proposed `(Δoff, Δon)`.
    pub fn mean_action(&self) -> (f64, f64) {
        let n = self.runs.len() as f64;
        let s = self.runs.iter().fold((0.0, 0.0), |a, r| {
            (a.0 + r.action.delta_off as f64, a.1 + r.action.delta_on as f64)
        });
        (s.0 / n, s.1 / n)
    }
}

pub const TL_VALID: f64 = 0.75;

/// Reset to `start`, take one policy step, then track the dot on the landed
/// recording. A run succeeds when TL exceeds 0.75 and the landed biases lie
/// in `range`.
pub fn tracker_success_experiment(
    policy: &dyn TuningPolicy,
    env: &mut MdpEnv,
    scene: &SpinningDotScene,
    range: &OptimalRange,
    start: BiasSettings,
    n_runs: usize,
) -> Result<TrackerExperiment> {
    if n_runs == 0 {
        return Err(Error::InvalidArgument("n_runs must be at least 1".into()));
    }
    let mut tl_cache: HashMap<BiasSettings, f64> = HashMap::new();
    let mut runs = Vec::with_capacity(n_runs);
    for _ in 0..n_runs {
        let obs = env.reset(start)?;
        let action = policy.propose(&obs.biases, &obs.frame)?;
        let landed = env.step(action)?.biases;
        let tl = match tl_cache.get(&landed) {
            Some(&tl) => tl,
            None => {
                let rec = env.recording(&landed)?;
                let tl = dot_tracking(&rec, scene)?.tl;
                tl_cache.insert(landed, tl);
                tl
            }
        };
        let in_range = range.contains(&landed);
        runs.push(TrackerRun {
            action,
            landed,
            tl,
            in_range,
            success: tl > TL_VALID && in_range,
        });
    }
    let success_rate = runs.iter().filter(|r| r.success).count() as f64 / n_runs as f64;
    Ok(TrackerExperiment {
        start,
        runs,
        success_rate,
    })
}
