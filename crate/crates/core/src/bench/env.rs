use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grid::snap_to_grid;
use crate::bias::{BiasAction, BiasDelta, BiasSettings};
use crate::error::{Error, Result};
use crate::events::EventRecording;
use crate::format;
use crate::frame::{accumulate, AccumulatedFrame};
use crate::manifest::DatasetManifest;

pub const DEFAULT_WINDOW_US: u64 = 8_000;
const CACHE_CAPACITY: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub biases: BiasSettings,
    pub frame: AccumulatedFrame,
}

/// File-swap environment: the state is a grid tuple, an action moves it and
/// the observation is a random window of the recording stored for the new
/// tuple. There is no reward.
#[derive(Debug)]
pub struct MdpEnv {
    manifest: DatasetManifest,
    root: PathBuf,
    index: HashMap<BiasSettings, usize>,
    current: BiasSettings,
    window_us: u64,
    rng: ChaCha8Rng,
    cache: HashMap<BiasSettings, Arc<EventRecording>>,
    cache_order: VecDeque<BiasSettings>,
}

impl MdpEnv {
    /// `root` is the directory recording paths are relative to.
    pub fn new(manifest: DatasetManifest, root: impl Into<PathBuf>, start: BiasSettings, seed: u64) -> Result<Self> {
        manifest.validate()?;
        let index = manifest.index();
        let current = snap_to_grid(&start, &manifest.grid);
        Ok(Self {
            manifest,
            root: root.into(),
            index,
            current,
            window_us: DEFAULT_WINDOW_US,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cache: HashMap::new(),
            cache_order: VecDeque::new(),
        })
    }

    pub fn open(manifest_path: &Path, start: BiasSettings, seed: u64) -> Result<Self> {
        let manifest = DatasetManifest::load(manifest_path)?;
        let root = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::new(manifest, root, start, seed)
    }

    pub fn with_window(mut self, window_us: u64) -> Self {
        self.window_us = window_us;
        self
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn current(&self) -> BiasSettings {
        self.current
    }

    pub fn window_us(&self) -> u64 {
        self.window_us
    }

    pub fn recording_path(&self, b: &BiasSettings) -> Result<PathBuf> {
        let i = *self.index.get(b).ok_or(Error::MissingEntry(*b))?;
        Ok(self.root.join(&self.manifest.entries[i].file))
    }

    pub fn recording(&mut self, b: &BiasSettings) -> Result<Arc<EventRecording>> {
        if let Some(r) = self.cache.get(b) {
            return Ok(r.clone());
        }
        let path = self.recording_path(b)?;
        let mut rec = format::load_recording(&path)?;
        rec.scene_id = self.manifest.scene_id.clone();
        let rec = Arc::new(rec);
        if self.cache_order.len() >= CACHE_CAPACITY {
            if let Some(old) = self.cache_order.pop_front() {
                self.cache.remove(&old);
            }
        }
        self.cache.insert(*b, rec.clone());
        self.cache_order.push_back(*b);
        Ok(rec)
    }

    /// A fresh random window of the recording at the current tuple.
    pub fn observe(&mut self) -> Result<Observation> {
        let b = self.current;
        let rec = self.recording(&b)?;
        if rec.duration < self.window_us {
            return Err(Error::WindowOutOfRange {
                start: 0,
                length: self.window_us,
                duration: rec.duration,
            });
        }
        let start = self.rng.random_range(0..=rec.duration - self.window_us);
        Ok(Observation {
            biases: b,
            frame: accumulate(&rec, start, self.window_us)?,
        })
    }

    pub fn reset(&mut self, start: BiasSettings) -> Result<Observation> {
        self.current = snap_to_grid(&start, &self.manifest.grid);
        self.observe()
    }

    pub fn step(&mut self, action: BiasAction) -> Result<Observation> {
        self.apply_delta(action.into())
    }

    /// Moves every axis; used by controllers that also change `fo` or `refr`.
    pub fn apply_delta(&mut self, delta: BiasDelta) -> Result<Observation> {
        let target = snap_to_grid(&self.current.apply(delta), &self.manifest.grid);
        if !self.index.contains_key(&target) {
            return Err(Error::MissingEntry(target));
        }
        self.current = target;
        self.observe()
    }
}
