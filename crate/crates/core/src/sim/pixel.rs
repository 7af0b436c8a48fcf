use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::{PixelParams, SimConfig};
use crate::events::{Event, Polarity};
use crate::scenes::IntensityField;

/// Per-call constants of the pixel model.
pub(super) struct PixelSim {
    theta_on: f64,
    theta_off: f64,
    alpha_lp: f64,
    /// `None` when the high-pass is disabled.
    a_hp: Option<f64>,
    refr: f64,
    tick: u64,
    duration: u64,
    epsilon: f64,
    seed: u64,
    noise_rate: f64,
    p_on: f64,
    leak_rate: f64,
}

/// Poisson arrivals drawn from a dedicated ChaCha stream. Arrival times are
/// cumulative unit exponentials divided by the rate, so a lower rate only
/// stretches the same sequence.
struct Arrivals {
    rng: ChaCha8Rng,
    rate: f64,
    acc: f64,
    next: f64,
}

impl Arrivals {
    fn new(seed: u64, stream: u64, rate: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut a = Self {
            rng,
            rate,
            acc: 0.0,
            next: f64::INFINITY,
        };
        a.advance();
        a
    }

    fn advance(&mut self) {
        if self.rate > 0.0 {
            let e: f64 = self.rng.sample(Exp1);
            self.acc += e;
            self.next = self.acc / self.rate * 1e6;
        }
    }
}

struct State {
    v_pr: f64,
    hp_prev_in: f64,
    v_hp: f64,
    v_mem: f64,
    t_last: Option<u64>,
}

impl PixelSim {
    pub(super) fn new(p: &PixelParams, cfg: &SimConfig, on_rate: f64, off_rate: f64) -> Self {
        let dt = cfg.tick_us as f64 * 1e-6;
        let a_hp = (p.f_hp > 0.0).then(|| {
            let tau = 1.0 / (TAU * p.f_hp);
            tau / (tau + dt)
        });
        let total = on_rate + off_rate;
        Self {
            theta_on: p.theta_on,
            theta_off: p.theta_off,
            alpha_lp: 1.0 - (-TAU * p.f_lp * dt).exp(),
            a_hp,
            refr: p.t_refr.max(1.0),
            tick: cfg.tick_us,
            duration: cfg.duration_us,
            epsilon: cfg.epsilon,
            seed: cfg.seed,
            noise_rate: p.lambda_noise,
            p_on: if total > 0.0 { on_rate / total } else { 0.5 },
            leak_rate: p.lambda_leak,
        }
    }

    fn log_intensity(&self, scene: &dyn IntensityField, t: u64, x: u16, y: u16) -> f64 {
        (scene.intensity(t, x, y) + self.epsilon).ln()
    }

    /// Appends the events of pixel `(x, y)` to `out` in time order.
    pub(super) fn run(
        &self,
        scene: &dyn IntensityField,
        x: u16,
        y: u16,
        idx: u64,
        gain: f64,
        out: &mut Vec<Event>,
    ) {
        let mut noise = Arrivals::new(self.seed, 2 * idx, self.noise_rate * gain);
        let mut leak = Arrivals::new(self.seed, 2 * idx + 1, self.leak_rate);
        let l0 = self.log_intensity(scene, 0, x, y);
        let mut s = State {
            v_pr: l0,
            hp_prev_in: l0,
            v_hp: if self.a_hp.is_some() { 0.0 } else { l0 },
            v_mem: 0.0,
            t_last: None,
        };
        s.v_mem = s.v_hp;

        let is_static = scene.is_static(x, y);
        let mut t = 0u64;
        while t < self.duration {
            self.drain_random(&mut s, &mut noise, &mut leak, t, x, y, out);
            if !is_static {
                let l = self.log_intensity(scene, t, x, y);
                self.step_filters(&mut s, l);
                if self.can_fire(&s, t) {
                    self.compare(&mut s, t, x, y, out);
                } else {
                    // the reference is held in reset for the whole dead time
                    s.v_mem = s.v_hp;
                }
            }
            t += self.tick;
        }
        self.drain_random(&mut s, &mut noise, &mut leak, self.duration - 1, x, y, out);
    }

    fn step_filters(&self, s: &mut State, l: f64) {
        s.v_pr += self.alpha_lp * (l - s.v_pr);
        match self.a_hp {
            Some(a) => {
                s.v_hp = a * (s.v_hp + s.v_pr - s.hp_prev_in);
                s.hp_prev_in = s.v_pr;
            }
            None => s.v_hp = s.v_pr,
        }
    }

    fn can_fire(&self, s: &State, t: u64) -> bool {
        s.t_last.is_none_or(|l| (t - l) as f64 >= self.refr)
    }

    fn fire(&self, s: &mut State, t: u64, x: u16, y: u16, pol: Polarity, out: &mut Vec<Event>) {
        out.push(Event::new(t, x, y, pol));
        s.v_mem = s.v_hp;
        s.t_last = Some(t);
    }

    fn compare(&self, s: &mut State, t: u64, x: u16, y: u16, out: &mut Vec<Event>) {
        let d = s.v_hp - s.v_mem;
        let pol = if d >= self.theta_on {
            Polarity::On
        } else if -d >= self.theta_off {
            Polarity::Off
        } else {
            return;
        };
        self.fire(s, t, x, y, pol, out);
    }

    /// Emits noise and leak arrivals up to and including `until`.
    #[allow(clippy::too_many_arguments)]
    fn drain_random(
        &self,
        s: &mut State,
        noise: &mut Arrivals,
        leak: &mut Arrivals,
        until: u64,
        x: u16,
        y: u16,
        out: &mut Vec<Event>,
    ) {
        loop {
            let from_noise = noise.next <= leak.next;
            let next = if from_noise { noise.next } else { leak.next };
            if !(next < (until + 1) as f64) {
                return;
            }
            let t = next as u64;
            let pol = if from_noise {
                let u: f64 = noise.rng.random();
                noise.advance();
                if u < self.p_on {
                    Polarity::On
                } else {
                    Polarity::Off
                }
            } else {
                leak.advance();
                Polarity::On
            };
            if self.can_fire(s, t) {
                self.fire(s, t, x, y, pol, out);
            }
        }
    }
}
