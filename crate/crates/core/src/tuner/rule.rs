use serde::{Deserialize, Serialize};

use crate::bench::{MdpEnv, Observation};
use crate::bias::{BiasDelta, BiasSettings};
use crate::error::{Error, Result};
use crate::events::EventRecording;
use crate::sim::noise_fraction_estimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    /// Target event-rate band in events per second.
    pub er_lo: f64,
    pub er_hi: f64,
    /// Largest acceptable unsupported-event fraction.
    pub noise_max: f64,
    pub step: i32,
    /// Support neighborhood of the noise estimate.
    pub noise_dt_us: u64,
    pub noise_radius: u16,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            er_lo: 2e4,
            er_hi: 6e4,
            noise_max: 0.3,
            step: 25,
            noise_dt_us: 2000,
            noise_radius: 1,
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.er_lo >= 0.0 && self.er_lo <= self.er_hi) || self.step <= 0 || !(self.noise_max >= 0.0) {
            return Err(Error::InvalidConfig(format!("rule controller {self:?}")));
        }
        Ok(())
    }
}

/// One fixed-step feedback decision. Event rate is regulated first: too
/// high raises both thresholds (and the refractory period when
/// `saturated` says the previous step was also too high), too low lowers
/// them. Only with the rate in band is noise handled, by lowering `fo`.
pub fn rule_controller_step(er: f64, noise_frac: f64, _current: &BiasSettings, cfg: &RuleConfig, saturated: bool) -> BiasDelta {
    let s = cfg.step;
    if er > cfg.er_hi {
        BiasDelta {
            diff_on: s,
            diff_off: s,
            refr: if saturated { s } else { 0 },
            ..Default::default()
        }
    } else if er < cfg.er_lo {
        BiasDelta {
            diff_on: -s,
            diff_off: -s,
            ..Default::default()
        }
    } else if noise_frac > cfg.noise_max {
        BiasDelta {
            fo: -s,
            ..Default::default()
        }
    } else {
        BiasDelta::default()
    }
}

/// Event rate and noise fraction of an observation.
pub fn measure(obs: &Observation, cfg: &RuleConfig, window_events: &EventRecording) -> Result<(f64, f64)> {
    let er = obs.frame.total() as f64 / (obs.frame.window_length as f64 * 1e-6);
    let noise = noise_fraction_estimate(window_events, cfg.noise_dt_us, cfg.noise_radius)?;
    Ok((er, noise))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerStep {
    pub biases: BiasSettings,
    pub er: f64,
    pub noise_frac: f64,
    pub delta: BiasDelta,
}

/// Runs the controller in the environment for `steps` decisions from
/// `start`. `converged_at` is the first step with a zero decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerTrace {
    pub steps: Vec<ControllerStep>,
    pub converged_at: Option<usize>,
}

pub fn run_rule_controller(env: &mut MdpEnv, start: BiasSettings, cfg: &RuleConfig, steps: usize) -> Result<ControllerTrace> {
    cfg.validate()?;
    let mut obs = env.reset(start)?;
    let mut trace = ControllerTrace {
        steps: Vec::with_capacity(steps),
        converged_at: None,
    };
    let mut was_high = false;
    for k in 0..steps {
        let rec = env.recording(&obs.biases)?;
        let (t0, len) = (obs.frame.window_start, obs.frame.window_length);
        let mut window = EventRecording::empty(rec.width, rec.height, t0 + len);
        window.events = rec.events_in(t0, t0 + len).to_vec();
        let (er, noise) = measure(&obs, cfg, &window)?;
        let high = er > cfg.er_hi;
        let delta = rule_controller_step(er, noise, &obs.biases, cfg, high && was_high);
        was_high = high;
        if delta.is_zero() && trace.converged_at.is_none() {
            trace.converged_at = Some(k);
        }
        trace.steps.push(ControllerStep {
            biases: obs.biases,
            er,
            noise_frac: noise,
            delta,
        });
        obs = env.apply_delta(delta)?;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decisions() {
        let c = RuleConfig::default();
        let b = BiasSettings::default();
        assert!(rule_controller_step(3e4, 0.1, &b, &c, false).is_zero());
        let hi = rule_controller_step(1e6, 0.1, &b, &c, false);
        assert_eq!((hi.diff_off, hi.diff_on, hi.fo, hi.hpf, hi.refr), (25, 25, 0, 0, 0));
        assert_eq!(rule_controller_step(1e6, 0.1, &b, &c, true).refr, 25);
        let lo = rule_controller_step(10.0, 0.9, &b, &c, false);
        assert_eq!((lo.diff_off, lo.diff_on, lo.fo), (-25, -25, 0));
        let noisy = rule_controller_step(3e4, 0.9, &b, &c, false);
        assert_eq!((noisy.diff_off, noisy.diff_on, noisy.fo), (0, 0, -25));
    }

    #[test]
    fn zero_iff_in_band() {
        let c = RuleConfig::default();
        let b = BiasSettings::default();
        for er in [0.0, 1e4, 2e4, 4e4, 6e4, 7e4] {
            for noise in [0.0, 0.3, 0.5] {
                let ok = (c.er_lo..=c.er_hi).contains(&er) && noise <= c.noise_max;
                assert_eq!(rule_controller_step(er, noise, &b, &c, false).is_zero(), ok);
            }
        }
    }
}
