use serde::{Deserialize, Serialize};

use crate::bias::{BiasAction, BiasSettings};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_STEP: i32 = 125;

/// Closed intervals of threshold settings an expert accepts for a scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimalRange {
    pub diff_off: (i32, i32),
    pub diff_on: (i32, i32),
}

impl OptimalRange {
    pub fn new(diff_off: (i32, i32), diff_on: (i32, i32)) -> Result<Self> {
        let r = Self { diff_off, diff_on };
        r.validate()?;
        Ok(r)
    }

    pub fn grey_dot() -> Self {
        Self {
            diff_off: (15, 65),
            diff_on: (40, 90),
        }
    }

    pub fn black_dot() -> Self {
        Self {
            diff_off: (40, 165),
            diff_on: (40, 115),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("diff_off", self.diff_off), ("diff_on", self.diff_on)] {
            if lo > hi {
                return Err(Error::InvalidArgument(format!("{name} range [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, b: &BiasSettings) -> bool {
        (self.diff_off.0..=self.diff_off.1).contains(&b.diff_off) && (self.diff_on.0..=self.diff_on.1).contains(&b.diff_on)
    }

    /// Per-axis distance to the interval, 0 inside.
    pub fn distance(&self, b: &BiasSettings) -> (i32, i32) {
        let d = |v: i32, (lo, hi): (i32, i32)| (lo - v).max(v - hi).max(0);
        (d(b.diff_off, self.diff_off), d(b.diff_on, self.diff_on))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }
}

/// Where an out-of-range axis is sent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ExpertTarget {
    #[default]
    Midpoint,
    /// The nearer endpoint moved `margin` into the interval.
    NearestEdge { margin: i32 },
}

/// Threshold change toward the optimal range with the default midpoint
/// target.
pub fn scripted_expert(current: &BiasSettings, range: &OptimalRange, max_step: i32) -> BiasAction {
    scripted_expert_with(current, range, max_step, ExpertTarget::Midpoint)
}

pub fn scripted_expert_with(current: &BiasSettings, range: &OptimalRange, max_step: i32, target: ExpertTarget) -> BiasAction {
    let max_step = max_step.abs();
    let axis = |v: i32, (lo, hi): (i32, i32)| -> i32 {
        if (lo..=hi).contains(&v) {
            return 0;
        }
        let goal = match target {
            ExpertTarget::Midpoint => lo + (hi - lo) / 2,
            ExpertTarget::NearestEdge { margin } => {
                let m = margin.clamp(0, (hi - lo) / 2);
                if v < lo {
                    lo + m
                } else {
                    hi - m
                }
            }
        };
        (goal - v).clamp(-max_step, max_step)
    };
    BiasAction::new(axis(current.diff_off, range.diff_off), axis(current.diff_on, range.diff_on))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let r = OptimalRange::grey_dot();
        let a = scripted_expert(&BiasSettings::thresholds(-10, -35), &r, DEFAULT_MAX_STEP);
        assert_eq!(a, BiasAction::new(50, 100));
        let edge = scripted_expert_with(&BiasSettings::thresholds(-10, -35), &r, 125, ExpertTarget::NearestEdge { margin: 0 });
        assert_eq!(edge, BiasAction::new(25, 75));
        assert_eq!(scripted_expert(&BiasSettings::thresholds(40, 40), &r, 125), BiasAction::ZERO);
        assert_eq!(scripted_expert(&BiasSettings::thresholds(300, 60), &r, 125).delta_off, -125);
    }

    #[test]
    fn range_checks() {
        assert!(OptimalRange::new((5, 1), (0, 0)).is_err());
        let r = OptimalRange::from_json(r#"{"diff_off":[15,65],"diff_on":[40,90]}"#).unwrap();
        assert_eq!(r, OptimalRange::grey_dot());
        assert_eq!(r.distance(&BiasSettings::thresholds(0, 100)), (15, 10));
    }

    proptest! {
        #[test]
        fn idempotent_inside_and_contracting_outside(off in -400i32..400, on in -400i32..400, step in 1i32..200) {
            let r = OptimalRange::grey_dot();
            let b = BiasSettings::thresholds(off, on);
            let a = scripted_expert(&b, &r, step);
            let next = b.apply(a.into());
            let (d0, d1) = (r.distance(&b), r.distance(&next));
            if r.contains(&b) {
                prop_assert_eq!(a, BiasAction::ZERO);
            }
            prop_assert!(d1.0 <= d0.0 && d1.1 <= d0.1);
            if d0.0 > 0 {
                prop_assert!(d1.0 < d0.0);
            }
            if d0.1 > 0 {
                prop_assert!(d1.1 < d0.1);
            }
            prop_assert!(a.delta_off.abs() <= step && a.delta_on.abs() <= step);
        }
    }
}
