use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bias::{BiasAxis, BiasSettings};
use crate::error::{Error, Result};
use crate::manifest::BiasGrid;

/// How non-integer equidistant values become bias values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridRounding {
    /// Toward zero. Matches the values of the published corpora, e.g.
    /// `-22`, `118` and `33` on the visual-odometry grid.
    #[default]
    Truncate,
    /// Nearest integer, halves away from zero.
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisRange {
    pub start: i32,
    pub end: i32,
    pub count: usize,
}

impl AxisRange {
    pub const fn new(start: i32, end: i32, count: usize) -> Self {
        Self { start, end, count }
    }
}

/// `count` equidistant values from `start` to `end`, both included.
pub fn build_axis(r: AxisRange, rounding: GridRounding) -> Result<Vec<i32>> {
    let err = |m: String| Err(Error::InvalidGrid(m));
    if r.count == 0 {
        return err("axis needs at least one value".into());
    }
    if r.start > r.end {
        return err(format!("start {} exceeds end {}", r.start, r.end));
    }
    if r.count == 1 {
        if r.start != r.end {
            return err(format!("a single value needs start == end, got {}..{}", r.start, r.end));
        }
        return Ok(vec![r.start]);
    }
    let den = r.count as i64 - 1;
    let values: Vec<i32> = (0..r.count as i64)
        .map(|k| {
            // exact rational start + k (end - start) / (count - 1)
            let num = r.start as i64 * den + k * (r.end as i64 - r.start as i64);
            let v = match rounding {
                GridRounding::Truncate => num / den,
                GridRounding::Nearest => (num as f64 / den as f64).round() as i64,
            };
            v as i32
        })
        .collect();
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return err(format!(
            "{} values over [{}, {}] are spaced less than 1 apart",
            r.count, r.start, r.end
        ));
    }
    Ok(values)
}

/// Grid from per-axis ranges in tuple order `(diff_on, diff_off, fo, hpf, refr)`.
pub fn build_grid(axes: [AxisRange; 5]) -> Result<BiasGrid> {
    build_grid_with(axes, GridRounding::default())
}

pub fn build_grid_with(axes: [AxisRange; 5], rounding: GridRounding) -> Result<BiasGrid> {
    let mut out = Vec::with_capacity(5);
    for (axis, r) in BiasAxis::ALL.iter().zip(axes) {
        out.push(build_axis(r, rounding).map_err(|e| Error::InvalidGrid(format!("{axis}: {e}")))?);
    }
    let out: [Vec<i32>; 5] = out.try_into().expect("five axes");
    BiasGrid::from_axes(out)
}

/// Named grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridPreset {
    /// 18 x 18 x 5 x 6 x 4 spinning-dot sweep.
    SpinningDot,
    /// 11 x 11 x 8 x 8 x 4 LED-board sweep.
    LedBoard,
    /// 15 x 15 x 5 x 6 x 1 visual-odometry sweep.
    VisualOdometry,
    /// 10 x 10 threshold grid, spacing 25 from -35, other biases at zero.
    DeskThresholds,
    /// 3 x 3 x 2 x 2 x 1 subset of the LED-board ranges.
    DeskLed,
}

impl GridPreset {
    pub const ALL: [GridPreset; 5] = [
        GridPreset::SpinningDot,
        GridPreset::LedBoard,
        GridPreset::VisualOdometry,
        GridPreset::DeskThresholds,
        GridPreset::DeskLed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GridPreset::SpinningDot => "spinning-dot",
            GridPreset::LedBoard => "led-board",
            GridPreset::VisualOdometry => "visual-odometry",
            GridPreset::DeskThresholds => "desk-thresholds",
            GridPreset::DeskLed => "desk-led",
        }
    }

    pub fn ranges(self) -> [AxisRange; 5] {
        let a = AxisRange::new;
        match self {
            GridPreset::SpinningDot => [
                a(-30, 130, 18),
                a(-10, 190, 18),
                a(-35, 55, 5),
                a(0, 120, 6),
                a(-20, 200, 4),
            ],
            GridPreset::LedBoard => [
                a(-80, 120, 11),
                a(-30, 170, 11),
                a(-29, 48, 8),
                a(4, 116, 8),
                a(-15, 225, 4),
            ],
            GridPreset::VisualOdometry => [
                a(-50, 140, 15),
                a(-10, 190, 15),
                a(-30, 55, 5),
                a(0, 120, 6),
                a(0, 0, 1),
            ],
            GridPreset::DeskThresholds => [
                a(-35, 190, 10),
                a(-35, 190, 10),
                a(0, 0, 1),
                a(0, 0, 1),
                a(0, 0, 1),
            ],
            GridPreset::DeskLed => [
                a(-80, 120, 3),
                a(-30, 170, 3),
                a(-29, 48, 2),
                a(4, 116, 2),
                a(-15, -15, 1),
            ],
        }
    }

    pub fn grid(self) -> BiasGrid {
        build_grid(self.ranges()).expect("preset grids are valid")
    }
}

impl FromStr for GridPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GridPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidGrid(format!("unknown grid preset {s:?}")))
    }
}

/// A grid as written in a config file: a preset name, per-axis ranges, or
/// explicit value lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Preset {
        preset: GridPreset,
    },
    Ranges {
        diff_on: AxisRange,
        diff_off: AxisRange,
        fo: AxisRange,
        hpf: AxisRange,
        refr: AxisRange,
        #[serde(default)]
        rounding: GridRounding,
    },
    Explicit(BiasGrid),
}

impl GridSpec {
    pub fn build(&self) -> Result<BiasGrid> {
        match self {
            GridSpec::Preset { preset } => Ok(preset.grid()),
            GridSpec::Ranges {
                diff_on,
                diff_off,
                fo,
                hpf,
                refr,
                rounding,
            } => build_grid_with([*diff_on, *diff_off, *fo, *hpf, *refr], *rounding),
            GridSpec::Explicit(g) => {
                g.validate()?;
                Ok(g.clone())
            }
        }
    }

    /// Parses JSON, or TOML when `toml_syntax` is set.
    pub fn parse(text: &str, toml_syntax: bool) -> Result<Self> {
        if toml_syntax {
            toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))
        } else {
            Ok(serde_json::from_str(text)?)
        }
    }
}

fn snap_axis(values: &[i32], v: i32) -> i32 {
    let i = values.partition_point(|&g| g < v);
    if i == 0 {
        return values[0];
    }
    if i == values.len() {
        return values[values.len() - 1];
    }
    let (lo, hi) = (values[i - 1], values[i]);
    if v - lo <= hi - v {
        lo
    } else {
        hi
    }
}

/// Nearest grid value per axis, ties toward the smaller value, clamped to
/// the axis range.
pub fn snap_to_grid(requested: &BiasSettings, grid: &BiasGrid) -> BiasSettings {
    let mut out = *requested;
    for axis in BiasAxis::ALL {
        out.set(axis, snap_axis(grid.axis(axis), requested.get(axis)));
    }
    out
}
