//! Procedural stimuli. Every scene is a pure function of `(t, x, y)` returning
//! relative luminance in `[0, 1]`.

mod dot;
mod led;

pub use dot::{DotPreset, SpinningDotScene};
pub use led::{LedBoardScene, LedSet, LedSpec, Waveform};

use serde::{Deserialize, Serialize};

/// Luminance of a scene over time, sampled at pixel centers.
pub trait IntensityField: Sync {
    fn width(&self) -> u16;
    fn height(&self) -> u16;

    fn intensity(&self, t_us: u64, x: u16, y: u16) -> f64;

    /// `true` when the pixel's intensity never changes. The simulator skips
    /// the circuit model for such pixels, which only emit noise.
    fn is_static(&self, _x: u16, _y: u16) -> bool {
        false
    }
}

/// Spatially uniform, time-invariant field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantScene {
    pub width: u16,
    pub height: u16,
    pub intensity: f64,
}

impl IntensityField for ConstantScene {
    fn width(&self) -> u16 {
        self.width
    }
    fn height(&self) -> u16 {
        self.height
    }
    fn intensity(&self, _t: u64, _x: u16, _y: u16) -> f64 {
        self.intensity
    }
    fn is_static(&self, _x: u16, _y: u16) -> bool {
        true
    }
}

/// Serializable description of any shipped scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SceneSpec {
    SpinningDot(SpinningDotScene),
    LedBoard(LedBoardScene),
    Constant(ConstantScene),
}

impl SceneSpec {
    pub fn field(&self) -> &dyn IntensityField {
        match self {
            SceneSpec::SpinningDot(s) => s,
            SceneSpec::LedBoard(s) => s,
            SceneSpec::Constant(s) => s,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SceneSpec::SpinningDot(_) => "spinning-dot",
            SceneSpec::LedBoard(_) => "led-board",
            SceneSpec::Constant(_) => "constant",
        }
    }

    /// Default desk-scale scene for a CLI id.
    pub fn by_id(id: &str, width: u16, height: u16) -> Option<Self> {
        Some(match id {
            "spinning-dot" | "grey-dot" => {
                SceneSpec::SpinningDot(SpinningDotScene::desk(width, height, DotPreset::Grey))
            }
            "black-dot" => {
                SceneSpec::SpinningDot(SpinningDotScene::desk(width, height, DotPreset::Black))
            }
            "led-board" => SceneSpec::LedBoard(LedBoardScene::desk(width, height, LedSet::Train)),
            "led-board-test" => {
                SceneSpec::LedBoard(LedBoardScene::desk(width, height, LedSet::Test))
            }
            _ => return None,
        })
    }
}

/// Fraction of a pixel covered by a disc edge, blended linearly over 1 px.
#[inline]
pub(crate) fn disc_coverage(dist: f64, radius: f64) -> f64 {
    (radius - dist + 0.5).clamp(0.0, 1.0)
}
