//! Grid definitions and the JSON manifest indexing a recorded corpus.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bias::{BiasAxis, BiasLimits, BiasSettings};
use crate::error::{Error, Result};
use crate::scenes::SceneSpec;
use crate::sim::SimConfig;

/// Explicit per-axis bias values. Each axis is strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasGrid {
    pub diff_on: Vec<i32>,
    pub diff_off: Vec<i32>,
    pub fo: Vec<i32>,
    pub hpf: Vec<i32>,
    pub refr: Vec<i32>,
}

impl BiasGrid {
    pub fn from_axes(axes: [Vec<i32>; 5]) -> Result<Self> {
        let [diff_on, diff_off, fo, hpf, refr] = axes;
        let g = Self {
            diff_on,
            diff_off,
            fo,
            hpf,
            refr,
        };
        g.validate()?;
        Ok(g)
    }

    /// A grid holding exactly one tuple.
    pub fn single(b: BiasSettings) -> Self {
        Self {
            diff_on: vec![b.diff_on],
            diff_off: vec![b.diff_off],
            fo: vec![b.fo],
            hpf: vec![b.hpf],
            refr: vec![b.refr],
        }
    }

    pub fn axis(&self, axis: BiasAxis) -> &[i32] {
        match axis {
            BiasAxis::DiffOn => &self.diff_on,
            BiasAxis::DiffOff => &self.diff_off,
            BiasAxis::Fo => &self.fo,
            BiasAxis::Hpf => &self.hpf,
            BiasAxis::Refr => &self.refr,
        }
    }

    pub fn axis_mut(&mut self, axis: BiasAxis) -> &mut Vec<i32> {
        match axis {
            BiasAxis::DiffOn => &mut self.diff_on,
            BiasAxis::DiffOff => &mut self.diff_off,
            BiasAxis::Fo => &mut self.fo,
            BiasAxis::Hpf => &mut self.hpf,
            BiasAxis::Refr => &mut self.refr,
        }
    }

    pub fn cardinalities(&self) -> [usize; 5] {
        BiasAxis::ALL.map(|a| self.axis(a).len())
    }

    /// Number of tuples in the Cartesian product.
    pub fn len(&self) -> usize {
        self.cardinalities().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        for axis in BiasAxis::ALL {
            let v = self.axis(axis);
            if v.is_empty() {
                return Err(Error::InvalidGrid(format!("axis {axis} is empty")));
            }
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} is not strictly increasing: {v:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, b: &BiasSettings) -> bool {
        BiasAxis::ALL
            .iter()
            .all(|&a| self.axis(a).binary_search(&b.get(a)).is_ok())
    }

    /// Axis-wise min/max, usable as simulator legal ranges.
    pub fn limits(&self) -> BiasLimits {
        let pick = |f: fn(&[i32]) -> i32| {
            BiasSettings::from_array(BiasAxis::ALL.map(|a| f(self.axis(a))))
        };
        BiasLimits {
            min: pick(|v| v[0]),
            max: pick(|v| v[v.len() - 1]),
        }
    }

    /// All tuples, last axis (`refr`) varying fastest.
    pub fn tuples(&self) -> impl Iterator<Item = BiasSettings> + '_ {
        let card = self.cardinalities();
        (0..self.len()).map(move |mut k| {
            let mut idx = [0usize; 5];
            for a in (0..5).rev() {
                idx[a] = k % card[a];
                k /= card[a];
            }
            BiasSettings::from_array(BiasAxis::ALL.map(|ax| self.axis(ax)[idx[ax.index()]]))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub biases: BiasSettings,
    /// Recording path, relative to the manifest's directory.
    pub file: PathBuf,
    pub duration: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<BTreeMap<String, f64>>,
}

impl ManifestEntry {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.as_ref()?.get(name).copied()
    }

    pub fn set_metric(&mut self, name: &str, value: f64) {
        self.metrics
            .get_or_insert_with(BTreeMap::new)
            .insert(name.to_string(), value);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scene_id: String,
    pub grid: BiasGrid,
    pub entries: Vec<ManifestEntry>,
    /// Scene and simulator settings the corpus was generated with, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
}

impl DatasetManifest {
    /// Completeness, membership and uniqueness of entries.
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.entries.len() != self.grid.len() {
            return Err(Error::InvalidManifest(format!(
                "{} entries for a grid of {} tuples",
                self.entries.len(),
                self.grid.len()
            )));
        }
        let mut seen = HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if !self.grid.contains(&e.biases) {
                return Err(Error::InvalidManifest(format!(
                    "entry {} is not a grid member",
                    e.biases
                )));
            }
            if !seen.insert(e.biases) {
                return Err(Error::InvalidManifest(format!("duplicate entry {}", e.biases)));
            }
        }
        Ok(())
    }

    pub fn index(&self) -> HashMap<BiasSettings, usize> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.biases, i))
            .collect()
    }

    pub fn entry(&self, b: &BiasSettings) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.biases == *b)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io_at(path))?;
        let m: Self = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(Error::io_at(&tmp))?;
        fs::rename(&tmp, path).map_err(Error::io_at(path))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> BiasGrid {
        BiasGrid::from_axes([vec![0, 10], vec![-5, 5, 15], vec![0], vec![0], vec![0]]).unwrap()
    }

    fn manifest(g: &BiasGrid) -> DatasetManifest {
        DatasetManifest {
            scene_id: "test".into(),
            grid: g.clone(),
            entries: g
                .tuples()
                .map(|b| ManifestEntry {
                    biases: b,
                    file: "x.bbe".into(),
                    duration: 1,
                    seed: 0,
                    metrics: None,
                })
                .collect(),
            scene: None,
            sim: None,
        }
    }

    #[test]
    fn tuples_enumerate_product() {
        let g = grid();
        let all: Vec<_> = g.tuples().collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all.iter().collect::<HashSet<_>>().len(), 6);
        assert!(all.iter().all(|b| g.contains(b)));
    }

    #[test]
    fn non_increasing_axis_rejected() {
        assert!(BiasGrid::from_axes([vec![1, 1], vec![0], vec![0], vec![0], vec![0]]).is_err());
        assert!(BiasGrid::from_axes([vec![], vec![0], vec![0], vec![0], vec![0]]).is_err());
    }

    #[test]
    fn manifest_invariants() {
        let g = grid();
        let mut m = manifest(&g);
        m.validate().unwrap();

        let mut short = m.clone();
        short.entries.pop();
        assert!(short.validate().is_err());

        m.entries[1].biases = m.entries[0].biases;
        assert!(m.validate().is_err());

        let mut off = manifest(&g);
        off.entries[0].biases.diff_on = 3;
        assert!(off.validate().is_err());
    }

    #[test]
    fn json_shape() {
        let m = manifest(&grid());
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert!(v["grid"]["diff_off"].is_array());
        assert!(v["entries"].is_array());
        assert_eq!(v["scene_id"], "test");
        let back: DatasetManifest = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
