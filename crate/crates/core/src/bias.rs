//! The five-bias tuple and the deltas applied to it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One bias axis, in tuple order `(diff_on, diff_off, fo, hpf, refr)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasAxis {
    DiffOn,
    DiffOff,
    Fo,
    Hpf,
    Refr,
}

impl BiasAxis {
    pub const ALL: [BiasAxis; 5] = [
        BiasAxis::DiffOn,
        BiasAxis::DiffOff,
        BiasAxis::Fo,
        BiasAxis::Hpf,
        BiasAxis::Refr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BiasAxis::DiffOn => "diff_on",
            BiasAxis::DiffOff => "diff_off",
            BiasAxis::Fo => "fo",
            BiasAxis::Hpf => "hpf",
            BiasAxis::Refr => "refr",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for BiasAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BiasAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches("bias_");
        BiasAxis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown bias axis {s:?}")))
    }
}

/// Integer bias offsets; the all-zero tuple is the sensor default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BiasSettings {
    pub diff_on: i32,
    pub diff_off: i32,
    pub fo: i32,
    pub hpf: i32,
    pub refr: i32,
}

impl BiasSettings {
    pub const fn new(diff_on: i32, diff_off: i32, fo: i32, hpf: i32, refr: i32) -> Self {
        Self {
            diff_on,
            diff_off,
            fo,
            hpf,
            refr,
        }
    }

    /// Thresholds only, everything else at default. Argument order follows
    /// the action convention `(diff_off, diff_on)`.
    pub const fn thresholds(diff_off: i32, diff_on: i32) -> Self {
        Self::new(diff_on, diff_off, 0, 0, 0)
    }

    pub fn get(&self, axis: BiasAxis) -> i32 {
        match axis {
            BiasAxis::DiffOn => self.diff_on,
            BiasAxis::DiffOff => self.diff_off,
            BiasAxis::Fo => self.fo,
            BiasAxis::Hpf => self.hpf,
            BiasAxis::Refr => self.refr,
        }
    }

    pub fn set(&mut self, axis: BiasAxis, value: i32) {
        match axis {
            BiasAxis::DiffOn => self.diff_on = value,
            BiasAxis::DiffOff => self.diff_off = value,
            BiasAxis::Fo => self.fo = value,
            BiasAxis::Hpf => self.hpf = value,
            BiasAxis::Refr => self.refr = value,
        }
    }

    pub fn to_array(self) -> [i32; 5] {
        [self.diff_on, self.diff_off, self.fo, self.hpf, self.refr]
    }

    pub fn from_array(v: [i32; 5]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn apply(self, delta: BiasDelta) -> Self {
        Self::new(
            self.diff_on + delta.diff_on,
            self.diff_off + delta.diff_off,
            self.fo + delta.fo,
            self.hpf + delta.hpf,
            self.refr + delta.refr,
        )
    }
}

impl fmt::Display for BiasSettings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {}, {})",
            self.diff_on, self.diff_off, self.fo, self.hpf, self.refr
        )
    }
}

/// Inclusive per-axis legal range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasLimits {
    pub min: BiasSettings,
    pub max: BiasSettings,
}

impl Default for BiasLimits {
    /// Union of every grid this workbench ships (spinning dot, LED board,
    /// VO, and the 10x10 threshold grid used for behavior cloning).
    fn default() -> Self {
        Self {
            min: BiasSettings::new(-85, -35, -35, 0, -20),
            max: BiasSettings::new(190, 190, 55, 120, 225),
        }
    }
}

impl BiasLimits {
    pub fn check(&self, b: &BiasSettings) -> Result<()> {
        for axis in BiasAxis::ALL {
            let (v, lo, hi) = (b.get(axis), self.min.get(axis), self.max.get(axis));
            if v < lo || v > hi {
                return Err(Error::BiasOutOfRange {
                    axis: axis.name(),
                    value: v,
                    min: lo,
                    max: hi,
                });
            }
        }
        Ok(())
    }
}

/// A relative change of all five biases. The rule controller needs the full
/// tuple; the learned policy only ever emits [`BiasAction`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BiasDelta {
    pub diff_on: i32,
    pub diff_off: i32,
    pub fo: i32,
    pub hpf: i32,
    pub refr: i32,
}

impl BiasDelta {
    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

/// Threshold-only action `(a, b, 0, 0, 0)`: `a` changes `diff_off`, `b`
/// changes `diff_on`. Serialized as the five-element array.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct BiasAction {
    pub delta_off: i32,
    pub delta_on: i32,
}

impl BiasAction {
    pub const ZERO: BiasAction = BiasAction {
        delta_off: 0,
        delta_on: 0,
    };

    pub const fn new(delta_off: i32, delta_on: i32) -> Self {
        Self {
            delta_off,
            delta_on,
        }
    }

    pub fn to_array(self) -> [i32; 5] {
        [self.delta_off, self.delta_on, 0, 0, 0]
    }

    pub fn l1(self) -> i32 {
        self.delta_off.abs() + self.delta_on.abs()
    }
}

impl TryFrom<[i32; 5]> for BiasAction {
    type Error = Error;

    fn try_from(v: [i32; 5]) -> Result<Self> {
        if v[2] != 0 || v[3] != 0 || v[4] != 0 {
            return Err(Error::InvalidArgument(format!(
                "action {v:?}: only the first two components may be non-zero"
            )));
        }
        Ok(Self::new(v[0], v[1]))
    }
}

impl From<BiasAction> for BiasDelta {
    fn from(a: BiasAction) -> Self {
        BiasDelta {
            diff_on: a.delta_on,
            diff_off: a.delta_off,
            ..Default::default()
        }
    }
}

impl Serialize for BiasAction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BiasAction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = <[i32; 5]>::deserialize(d)?;
        BiasAction::try_from(v).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for BiasAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, 0, 0, 0)", self.delta_off, self.delta_on)
    }
}
