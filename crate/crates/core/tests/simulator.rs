use std::collections::HashMap;
use std::f64::consts::TAU;

use biasbench_core::bench::GridPreset;
use biasbench_core::format::write_recording;
use biasbench_core::scenes::{ConstantScene, DotPreset, IntensityField, LedBoardScene, LedSet, SpinningDotScene};
use biasbench_core::sim::{bias_to_params, noise_fraction_estimate, simulate, simulate_with_params, SimConfig};
use biasbench_core::{event_rate, BiasAxis, BiasLimits, BiasSettings, EventRecording, Polarity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn refractory_oracle(refr: i32) -> f64 {
    1000.0 * 2f64.powf(-refr as f64 / 50.0)
}

/// Smallest same-pixel gap between consecutive events, in microseconds.
fn min_gap(rec: &EventRecording) -> Option<u64> {
    let mut last: HashMap<(u16, u16), u64> = HashMap::new();
    let mut best: Option<u64> = None;
    for e in &rec.events {
        if let Some(prev) = last.insert((e.x, e.y), e.t) {
            let g = e.t - prev;
            best = Some(best.map_or(g, |b| b.min(g)));
        }
    }
    best
}

fn random_biases(rng: &mut ChaCha8Rng, lim: &BiasLimits) -> BiasSettings {
    let mut b = BiasSettings::default();
    for axis in BiasAxis::ALL {
        b.set(axis, rng.random_range(lim.min.get(axis)..=lim.max.get(axis)));
    }
    b
}

#[test]
fn refractory_spacing_over_random_biases() {
    let scene = LedBoardScene::desk(48, 48, LedSet::Train);
    let mut cfg = SimConfig::new(48, 48);
    cfg.duration_us = 200_000;
    cfg.hot_pixel_fraction = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let b = random_biases(&mut rng, &cfg.limits);
        let rec = simulate(&scene, &b, &cfg).unwrap();
        let bound = refractory_oracle(b.refr);
        if let Some(g) = min_gap(&rec) {
            assert!(g as f64 >= bound, "{b}: gap {g} < {bound}");
        }
    }
}

#[test]
fn event_rate_falls_with_each_threshold_step() {
    let scene = SpinningDotScene::desk(64, 64, DotPreset::Grey);
    let mut cfg = SimConfig::new(64, 64);
    cfg.duration_us = 500_000;
    let grid = GridPreset::DeskThresholds.grid();
    for axis in [BiasAxis::DiffOn, BiasAxis::DiffOff] {
        let rates: Vec<f64> = grid
            .axis(axis)
            .iter()
            .map(|&v| {
                let mut b = BiasSettings::default();
                b.set(axis, v);
                event_rate(&simulate(&scene, &b, &cfg).unwrap()).unwrap()
            })
            .collect();
        for w in rates.windows(2) {
            assert!(w[1] <= w[0] * 1.05, "{axis:?}: {rates:?}");
        }
    }
}

/// Intensity step at one pixel; every other pixel is constant.
struct Step {
    at_us: u64,
    ratio: f64,
}

impl IntensityField for Step {
    fn width(&self) -> u16 {
        4
    }
    fn height(&self) -> u16 {
        4
    }
    fn intensity(&self, t: u64, x: u16, y: u16) -> f64 {
        if (x, y) == (1, 2) && t >= self.at_us {
            0.1 * self.ratio
        } else {
            0.1
        }
    }
    fn is_static(&self, x: u16, y: u16) -> bool {
        (x, y) != (1, 2)
    }
}

fn quiet(width: u16, height: u16) -> SimConfig {
    let mut cfg = SimConfig::new(width, height);
    cfg.mapping.lambda0 = 0.0;
    cfg.mapping.lambda_leak = 0.0;
    cfg.hot_pixel_fraction = 0.0;
    cfg
}

#[test]
fn step_response_fires_on_within_three_time_constants() {
    let mut cfg = quiet(4, 4);
    cfg.duration_us = 50_000;
    for fo in [-35, -10, 0, 30, 55] {
        for on in [-30, 0, 60] {
            let b = BiasSettings { diff_on: on, fo, ..Default::default() };
            let theta = 0.2 * (on as f64 / 50.0).exp();
            let tau_us = 1e6 / (TAU * 300.0 * 2f64.powf(fo as f64 / 25.0));
            // +2 theta in log intensity, on top of the epsilon floor
            let scene = Step {
                at_us: 10_000,
                ratio: ((2.0 * theta).exp() * (0.1 + 1e-4) - 1e-4) / 0.1,
            };
            let rec = simulate(&scene, &b, &cfg).unwrap();
            assert!(rec.events.iter().all(|e| e.polarity == Polarity::On), "fo {fo} on {on}");
            assert!(rec.events.iter().all(|e| (e.x, e.y) == (1, 2)));
            let first = rec.events.first().expect("step must fire").t;
            assert!(first >= 10_000);
            assert!((first - 10_000) as f64 <= 3.0 * tau_us, "fo {fo} on {on}: {first} vs tau {tau_us}");
        }
    }
}

struct Sine {
    hz: f64,
}

impl IntensityField for Sine {
    fn width(&self) -> u16 {
        8
    }
    fn height(&self) -> u16 {
        8
    }
    fn intensity(&self, t: u64, _x: u16, _y: u16) -> f64 {
        0.5 + 0.4 * (TAU * self.hz * t as f64 * 1e-6).sin()
    }
}

#[test]
fn high_pass_suppresses_slow_sine() {
    let mut cfg = quiet(8, 8);
    cfg.duration_us = 2_000_000;
    let mut p = bias_to_params(&BiasSettings::default(), &cfg).unwrap();
    let scene = Sine { hz: 1.0 };
    let open = simulate_with_params(&scene, &p, &cfg).unwrap().len();
    p.f_hp = 50.0;
    let filtered = simulate_with_params(&scene, &p, &cfg).unwrap().len();
    assert!(open > 1000, "{open}");
    assert!((filtered as f64) < 0.2 * open as f64, "{filtered} vs {open}");
}

fn bytes(rec: &EventRecording) -> Vec<u8> {
    let mut out = Vec::new();
    write_recording(rec, &mut out).unwrap();
    out
}

#[test]
fn identical_bytes_across_thread_counts() {
    let scene = SpinningDotScene::desk(64, 64, DotPreset::Grey);
    let mut cfg = SimConfig::new(64, 64);
    cfg.duration_us = 300_000;
    cfg.seed = 99;
    cfg.hot_pixel_fraction = 0.005;
    let b = BiasSettings::thresholds(-35, -10);
    let runs: Vec<Vec<u8>> = [1, 2, 8]
        .into_iter()
        .map(|k| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap();
            pool.install(|| bytes(&simulate(&scene, &b, &cfg).unwrap()))
        })
        .collect();
    assert!(runs[0].len() > 44);
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
    cfg.seed = 100;
    assert_ne!(bytes(&simulate(&scene, &b, &cfg).unwrap()), runs[0]);
}

fn brute_force_noise(rec: &EventRecording, dt: u64, radius: u16) -> f64 {
    let ev = &rec.events;
    let lonely = ev
        .iter()
        .enumerate()
        .filter(|&(i, a)| {
            !ev.iter().enumerate().any(|(j, b)| {
                j != i && a.t.abs_diff(b.t) <= dt && a.x.abs_diff(b.x) <= radius && a.y.abs_diff(b.y) <= radius
            })
        })
        .count();
    lonely as f64 / ev.len() as f64
}

#[test]
fn pure_noise_is_mostly_unsupported() {
    let scene = ConstantScene {
        width: 32,
        height: 32,
        intensity: 0.5,
    };
    let mut cfg = SimConfig::new(32, 32);
    cfg.hot_pixel_fraction = 0.0;
    cfg.mapping.lambda_leak = 0.0;
    // about 5 Hz per pixel at zero biases
    cfg.mapping.lambda0 = 2.5 / (-2.0f64).exp();
    let rec = simulate(&scene, &BiasSettings::default(), &cfg).unwrap();
    let rate = rec.len() as f64 / 1024.0;
    assert!((3.5..6.5).contains(&rate), "{rate}");
    let est = noise_fraction_estimate(&rec, 500, 1).unwrap();
    let oracle = brute_force_noise(&rec, 500, 1);
    assert!((est - oracle).abs() < 1e-12, "{est} vs {oracle}");
    assert!(est >= 0.9, "{est}");
}

#[test]
fn constant_scene_without_noise_is_silent() {
    let scene = ConstantScene {
        width: 16,
        height: 16,
        intensity: 0.3,
    };
    let rec = simulate(&scene, &BiasSettings::thresholds(-35, -35), &quiet(16, 16)).unwrap();
    assert!(rec.is_empty());
}
