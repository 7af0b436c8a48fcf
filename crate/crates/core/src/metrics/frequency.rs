use std::f64::consts::TAU;

use nalgebra::{Matrix4, Vector4};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventRecording, Polarity};
use crate::scenes::LedBoardScene;

pub const RFU_CLIP: f64 = 2.0;
const MAX_ITERATIONS: usize = 200;
const TOLERANCE: f64 = 1e-10;
/// Zero-padding factor of the seeding periodogram.
const PAD: usize = 8;
/// A sub-harmonic peak at least this fraction of the global peak is taken
/// as the fundamental.
const SUBHARMONIC_RATIO: f64 = 0.5;

/// Cosine fit `A cos(2π f t + φ) + c` of a binned ON minus OFF signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyFit {
    pub f_est: f64,
    /// One-sigma standard error of `f_est`; infinite for degenerate fits.
    pub delta_f_est: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    pub iterations: usize,
    pub degenerate: bool,
    pub f0: Option<f64>,
    pub rfu: Option<f64>,
}

impl FrequencyFit {
    fn degenerate() -> Self {
        Self {
            f_est: 0.0,
            delta_f_est: f64::INFINITY,
            amplitude: 0.0,
            phase: 0.0,
            offset: 0.0,
            iterations: 0,
            degenerate: true,
            f0: None,
            rfu: None,
        }
    }

    /// Attaches the ground truth and its RFU.
    pub fn with_truth(mut self, f0: f64) -> Result<Self> {
        self.rfu = Some(rfu(&self, f0)?);
        self.f0 = Some(f0);
        Ok(self)
    }
}

/// Relative frequency uncertainty `min(2, (|f_est - f0| + Δf) / f0)`.
pub fn rfu(fit: &FrequencyFit, f0: f64) -> Result<f64> {
    if !(f0 > 0.0) {
        return Err(Error::InvalidArgument(format!("ground-truth frequency {f0} must be positive")));
    }
    let v = ((fit.f_est - f0).abs() + fit.delta_f_est) / f0;
    Ok(if v.is_nan() { RFU_CLIP } else { v.min(RFU_CLIP) })
}

/// Bins `ON - OFF` counts of the pixels in `roi` and fits a cosine.
pub fn fit_frequency(rec: &EventRecording, roi: &[(u16, u16)], bin_us: u64) -> Result<FrequencyFit> {
    if bin_us == 0 {
        return Err(Error::InvalidArgument("bin_us must be positive".into()));
    }
    let w = rec.width as usize;
    let mut mask = vec![false; w * rec.height as usize];
    for &(x, y) in roi {
        if x >= rec.width || y >= rec.height {
            return Err(Error::InvalidArgument(format!("roi pixel ({x}, {y}) outside sensor")));
        }
        mask[y as usize * w + x as usize] = true;
    }
    let n = (rec.duration / bin_us) as usize;
    let mut s = vec![0.0; n];
    for e in &rec.events {
        let k = (e.t / bin_us) as usize;
        if k < n && mask[e.y as usize * w + e.x as usize] {
            s[k] += match e.polarity {
                Polarity::On => 1.0,
                Polarity::Off => -1.0,
            };
        }
    }
    Ok(fit_cosine(&s, bin_us as f64 * 1e-6))
}

fn periodogram_seed(s: &[f64], dt: f64) -> Option<f64> {
    let n = s.len();
    let m = (n * PAD).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = s.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(m, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let power: Vec<f64> = buf[..m / 2].iter().map(|c| c.norm_sqr()).collect();
    let df = 1.0 / (m as f64 * dt);
    // skip everything below one cycle per record
    let k_min = ((1.0 / (n as f64 * dt)) / df).ceil() as usize;
    let k_min = k_min.max(1);
    if k_min + 2 >= power.len() {
        return None;
    }
    let is_peak = |k: usize| k > k_min && k + 1 < power.len() && power[k] >= power[k - 1] && power[k] >= power[k + 1];
    let k_max = (k_min..power.len()).max_by(|&a, &b| power[a].total_cmp(&power[b]))?;
    if !(power[k_max] > 0.0) {
        return None;
    }
    // prefer the lowest odd sub-harmonic carrying a comparable peak
    let mut k_best = k_max;
    for div in [9usize, 7, 5, 3] {
        let target = k_max as f64 / div as f64;
        let lo = (target - 2.0).floor().max(k_min as f64) as usize;
        let hi = ((target + 2.0).ceil() as usize).min(power.len() - 2);
        if lo >= hi {
            continue;
        }
        if let Some(k) = (lo..=hi)
            .filter(|&k| is_peak(k))
            .max_by(|&a, &b| power[a].total_cmp(&power[b]))
        {
            if power[k] >= SUBHARMONIC_RATIO * power[k_max] {
                k_best = k;
                break;
            }
        }
    }
    let k = k_best;
    let mut offset = 0.0;
    if k > 0 && k + 1 < power.len() {
        let (a, b, c) = (power[k - 1], power[k], power[k + 1]);
        let den = a - 2.0 * b + c;
        if den != 0.0 {
            offset = (0.5 * (a - c) / den).clamp(-0.5, 0.5);
        }
    }
    Some((k as f64 + offset) * df)
}

/// Levenberg-Marquardt cosine fit of uniformly sampled `s` with spacing
/// `dt` seconds; samples sit at bin centers.
pub fn fit_cosine(s: &[f64], dt: f64) -> FrequencyFit {
    let n = s.len();
    if n <= 4 || s.iter().all(|&v| v == 0.0) || s.iter().any(|v| !v.is_finite()) {
        return FrequencyFit::degenerate();
    }
    let mean = s.iter().sum::<f64>() / n as f64;
    let y: Vec<f64> = s.iter().map(|v| v - mean).collect();
    if y.iter().all(|&v| v == 0.0) {
        return FrequencyFit::degenerate();
    }
    let t: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) * dt).collect();
    let Some(f_init) = periodogram_seed(&y, dt) else {
        return FrequencyFit::degenerate();
    };

    // amplitude and phase from the DFT at the seed frequency
    let (mut re, mut im) = (0.0, 0.0);
    for (yk, tk) in y.iter().zip(&t) {
        let a = TAU * f_init * tk;
        re += yk * a.cos();
        im -= yk * a.sin();
    }
    let mut p = Vector4::new(2.0 * (re * re + im * im).sqrt() / n as f64, f_init, im.atan2(re), 0.0);

    let residuals = |p: &Vector4<f64>| -> (Vec<f64>, f64) {
        let r: Vec<f64> = y
            .iter()
            .zip(&t)
            .map(|(yk, tk)| yk - (p[0] * (TAU * p[1] * tk + p[2]).cos() + p[3]))
            .collect();
        let rss = r.iter().map(|v| v * v).sum();
        (r, rss)
    };
    let normal = |p: &Vector4<f64>, r: &[f64]| -> (Matrix4<f64>, Vector4<f64>) {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (rk, tk) in r.iter().zip(&t) {
            let arg = TAU * p[1] * tk + p[2];
            let (sn, cs) = arg.sin_cos();
            let j = Vector4::new(cs, -p[0] * sn * TAU * tk, -p[0] * sn, 1.0);
            jtj += j * j.transpose();
            jtr += j * *rk;
        }
        (jtj, jtr)
    };

    let (mut r, mut rss) = residuals(&p);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS && rss > 0.0 {
        iterations += 1;
        let (jtj, jtr) = normal(&p, &r);
        let mut damped = jtj;
        for i in 0..4 {
            damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
        }
        let Some(step) = damped.cholesky().map(|c| c.solve(&jtr)) else {
            lambda *= 10.0;
            continue;
        };
        let cand = p + step;
        let (r_new, rss_new) = residuals(&cand);
        if rss_new <= rss {
            let rel = (rss - rss_new) / rss.max(f64::MIN_POSITIVE);
            p = cand;
            r = r_new;
            rss = rss_new;
            lambda = (lambda / 10.0).max(1e-15);
            if rel < TOLERANCE {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e15 {
                break;
            }
        }
    }

    // canonical form: positive amplitude, phase in (-π, π]
    if p[0] < 0.0 {
        p[0] = -p[0];
        p[2] += std::f64::consts::PI;
    }
    p[2] = (p[2] + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;

    let (jtj, _) = normal(&p, &r);
    let sigma2 = rss / (n - 4) as f64;
    let var_f = jtj.try_inverse().map(|inv| inv[(1, 1)]).filter(|v| *v >= 0.0 && v.is_finite());
    let (delta, degenerate) = match var_f {
        Some(v) if p[1] > 0.0 && p[0] > 0.0 => ((sigma2 * v).sqrt(), false),
        _ => (f64::INFINITY, true),
    };
    FrequencyFit {
        f_est: p[1],
        delta_f_est: delta,
        amplitude: p[0],
        phase: p[2],
        offset: p[3] + mean,
        iterations,
        degenerate,
        f0: None,
        rfu: None,
    }
}

/// Bin width for an LED blinking at `f0`: about ten bins per period, at
/// most 1 ms.
pub fn led_bin_us(f0: f64) -> u64 {
    ((1e6 / (10.0 * f0)).floor() as u64).clamp(50, 1000)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardReport {
    pub fits: Vec<FrequencyFit>,
    pub valid: bool,
    pub mean_rfu: f64,
    pub max_rfu: f64,
}

/// Fits every LED of the board. The board is valid when every RFU is
/// below the clip value.
pub fn board_rfu_report(rec: &EventRecording, scene: &LedBoardScene) -> Result<BoardReport> {
    if scene.leds.is_empty() {
        return Err(Error::InvalidArgument("board has no LEDs".into()));
    }
    let mut fits = Vec::with_capacity(scene.leds.len());
    for (i, led) in scene.leds.iter().enumerate() {
        let roi = scene.roi(i);
        let fit = match fit_frequency(rec, &roi, led_bin_us(led.frequency)) {
            Ok(f) => f,
            Err(_) => FrequencyFit::degenerate(),
        };
        fits.push(fit.with_truth(led.frequency)?);
    }
    let rfus: Vec<f64> = fits.iter().map(|f| f.rfu.unwrap_or(RFU_CLIP)).collect();
    Ok(BoardReport {
        valid: rfus.iter().all(|&r| r < RFU_CLIP),
        mean_rfu: rfus.iter().sum::<f64>() / rfus.len() as f64,
        max_rfu: rfus.iter().copied().fold(0.0, f64::max),
        fits,
    })
}
