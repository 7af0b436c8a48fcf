//! Per-pixel DVS circuit model.
//!
//! Each pixel runs a log photoreceptor, a first-order low-pass, an optional
//! first-order high-pass and a pair of contrast comparators with a shared
//! refractory period. Background noise, ON leak events and a fixed set of hot
//! pixels are layered on top with per-pixel seeded random streams.

mod noise;
mod pixel;

pub use noise::noise_fraction_estimate;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias::{BiasLimits, BiasSettings};
use crate::error::{Error, Result};
use crate::events::{Event, EventRecording};
use crate::scenes::IntensityField;

/// Constants of the bias to circuit-parameter mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasMapping {
    pub theta0: f64,
    pub s_th: f64,
    pub f_lp0: f64,
    pub s_fo: f64,
    pub f_hp0: f64,
    pub s_hp: f64,
    pub t_r0: f64,
    pub s_r: f64,
    /// Background rate scale (Hz per pixel).
    pub lambda0: f64,
    /// Threshold scale of the background rate.
    pub theta_n: f64,
    /// ON leak rate (Hz per pixel) at `theta_on = theta0`. A constant leak
    /// drift takes proportionally longer to cross a higher threshold, so the
    /// rate scales as `theta0 / theta_on`.
    pub lambda_leak: f64,
}

impl Default for BiasMapping {
    fn default() -> Self {
        Self {
            theta0: 0.2,
            s_th: 50.0,
            f_lp0: 300.0,
            s_fo: 25.0,
            f_hp0: 0.5,
            s_hp: 20.0,
            t_r0: 1000.0,
            s_r: 50.0,
            lambda0: 10.0,
            theta_n: 0.1,
            lambda_leak: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub width: u16,
    pub height: u16,
    pub duration_us: u64,
    pub tick_us: u64,
    pub seed: u64,
    /// Selects the hot pixels. Fixed per simulated sensor, so it does not
    /// change with the recording seed.
    pub sensor_seed: u64,
    pub hot_pixel_fraction: f64,
    pub hot_pixel_multiplier: f64,
    /// Intensity floor added before taking the log.
    pub epsilon: f64,
    /// Legal bias ranges. `hpf == limits.min.hpf` disables the high-pass.
    pub limits: BiasLimits,
    pub mapping: BiasMapping,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            duration_us: 1_000_000,
            tick_us: 100,
            seed: 0,
            sensor_seed: 0x00ba_5be7,
            hot_pixel_fraction: 0.0005,
            hot_pixel_multiplier: 1000.0,
            epsilon: 1e-4,
            limits: BiasLimits::default(),
            mapping: BiasMapping::default(),
        }
    }
}

impl SimConfig {
    pub fn new(width: u16, height: u16) -> Self {
        Self {
            width,
            height,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("sensor must have at least one pixel");
        }
        if self.duration_us == 0 {
            return bad("duration must be positive");
        }
        if !(1..=1000).contains(&self.tick_us) {
            return bad("tick_us must lie in [1, 1000]");
        }
        if !(0.0..=1.0).contains(&self.hot_pixel_fraction) || self.hot_pixel_multiplier < 0.0 {
            return bad("hot pixel fraction must lie in [0, 1] with a non-negative multiplier");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        let m = &self.mapping;
        let positive = [m.theta0, m.s_th, m.f_lp0, m.s_fo, m.f_hp0, m.s_hp, m.t_r0, m.s_r, m.theta_n];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("mapping constants must be positive and finite");
        }
        if !(m.lambda0 >= 0.0) || !(m.lambda_leak >= 0.0) {
            return bad("rates must be non-negative");
        }
        for axis in crate::bias::BiasAxis::ALL {
            if self.limits.min.get(axis) > self.limits.max.get(axis) {
                return bad("bias limits are inverted");
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

/// Physical parameters shared by every pixel for one bias setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelParams {
    pub theta_on: f64,
    pub theta_off: f64,
    /// Hz.
    pub f_lp: f64,
    /// Hz; 0 disables the high-pass stage.
    pub f_hp: f64,
    /// Microseconds.
    pub t_refr: f64,
    /// Background events per second, both polarities.
    pub lambda_noise: f64,
    pub lambda_leak: f64,
}

impl PixelParams {
    /// Background rates of the ON and OFF comparators separately.
    pub fn noise_rates(&self, m: &BiasMapping) -> (f64, f64) {
        (
            m.lambda0 * (-self.theta_on / m.theta_n).exp(),
            m.lambda0 * (-self.theta_off / m.theta_n).exp(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.theta_on > 0.0
            && self.theta_off > 0.0
            && self.f_lp > 0.0
            && self.f_hp >= 0.0
            && self.t_refr >= 0.0
            && self.lambda_noise >= 0.0
            && self.lambda_leak >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid pixel parameters {self:?}")))
        }
    }
}

pub fn bias_to_params(b: &BiasSettings, cfg: &SimConfig) -> Result<PixelParams> {
    cfg.limits.check(b)?;
    let m = &cfg.mapping;
    let theta_on = m.theta0 * (b.diff_on as f64 / m.s_th).exp();
    let theta_off = m.theta0 * (b.diff_off as f64 / m.s_th).exp();
    let f_hp = if b.hpf == cfg.limits.min.hpf {
        0.0
    } else {
        m.f_hp0 * (b.hpf as f64 / m.s_hp).exp2()
    };
    Ok(PixelParams {
        theta_on,
        theta_off,
        f_lp: m.f_lp0 * (b.fo as f64 / m.s_fo).exp2(),
        f_hp,
        t_refr: m.t_r0 * (-b.refr as f64 / m.s_r).exp2(),
        lambda_noise: m.lambda0 * ((-theta_on / m.theta_n).exp() + (-theta_off / m.theta_n).exp()),
        lambda_leak: m.lambda_leak * m.theta0 / theta_on,
    })
}

/// Simulates one recording of `scene` under biases `b`.
pub fn simulate(scene: &dyn IntensityField, b: &BiasSettings, cfg: &SimConfig) -> Result<EventRecording> {
    let params = bias_to_params(b, cfg)?;
    let mut rec = simulate_with_params(scene, &params, cfg)?;
    rec.biases = *b;
    Ok(rec)
}

/// Like [`simulate`], with the circuit parameters given directly. The
/// recording's `biases` field is left at zero.
pub fn simulate_with_params(
    scene: &dyn IntensityField,
    params: &PixelParams,
    cfg: &SimConfig,
) -> Result<EventRecording> {
    cfg.validate()?;
    params.validate()?;
    if scene.width() != cfg.width || scene.height() != cfg.height {
        return Err(Error::DimensionMismatch {
            scene_w: scene.width(),
            scene_h: scene.height(),
            sensor_w: cfg.width,
            sensor_h: cfg.height,
        });
    }
    let hot = hot_pixels(cfg);
    let (on_rate, off_rate) = params.noise_rates(&cfg.mapping);
    let sim = pixel::PixelSim::new(params, cfg, on_rate, off_rate);
    let width = cfg.width as usize;

    let rows: Vec<Vec<Event>> = (0..cfg.height)
        .into_par_iter()
        .map(|y| {
            let mut out = Vec::new();
            for x in 0..cfg.width {
                let idx = y as usize * width + x as usize;
                let gain = if hot[idx] { cfg.hot_pixel_multiplier } else { 1.0 };
                sim.run(scene, x, y, idx as u64, gain, &mut out);
            }
            out
        })
        .collect();

    let mut events: Vec<Event> = rows.into_iter().flatten().collect();
    events.sort_unstable();
    Ok(EventRecording {
        width: cfg.width,
        height: cfg.height,
        duration: cfg.duration_us,
        biases: BiasSettings::default(),
        scene_id: String::new(),
        seed: cfg.seed,
        events,
    })
}

/// Hot-pixel mask, `round(fraction * n)` pixels drawn with `sensor_seed`.
pub fn hot_pixels(cfg: &SimConfig) -> Vec<bool> {
    let n = cfg.width as usize * cfg.height as usize;
    let k = ((cfg.hot_pixel_fraction * n as f64).round() as usize).min(n);
    let mut mask = vec![false; n];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sensor_seed);
    for i in rand::seq::index::sample(&mut rng, n, k) {
        mask[i] = true;
    }
    mask
}
