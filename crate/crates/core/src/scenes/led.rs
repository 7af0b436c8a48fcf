use serde::{Deserialize, Serialize};

use super::{disc_coverage, IntensityField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    Square,
    Sine,
    Triangle,
}

impl Waveform {
    /// Normalized drive level in `[0, 1]` at phase `ft` (cycles).
    pub fn eval(self, cycles: f64, duty: f64) -> f64 {
        let p = cycles.rem_euclid(1.0);
        match self {
            Waveform::Square => {
                if p < duty {
                    1.0
                } else {
                    0.0
                }
            }
            Waveform::Sine => 0.5 * (1.0 + (std::f64::consts::TAU * p).sin()),
            Waveform::Triangle => 1.0 - (2.0 * p - 1.0).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedSpec {
    pub center: (f64, f64),
    pub radius: f64,
    pub waveform: Waveform,
    pub frequency: f64,
    #[serde(default = "default_duty")]
    pub duty: f64,
}

fn default_duty() -> f64 {
    0.5
}

impl LedSpec {
    pub fn level(&self, t_us: u64) -> f64 {
        self.waveform.eval(self.frequency * t_us as f64 * 1e-6, self.duty)
    }

    /// Pixels whose centers lie inside the LED disc.
    pub fn contains(&self, x: u16, y: u16) -> bool {
        let (dx, dy) = (x as f64 + 0.5 - self.center.0, y as f64 + 0.5 - self.center.1);
        (dx * dx + dy * dy).sqrt() <= self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedSet {
    Train,
    Test,
}

impl LedSet {
    /// Square, then sine/triangle frequencies in Hz.
    pub fn frequencies(self) -> ([f64; 4], [f64; 6]) {
        match self {
            LedSet::Train => ([60.0, 120.0, 180.0, 240.0], [2.5, 4.0, 6.0, 10.0, 20.0, 40.0]),
            LedSet::Test => ([75.0, 150.0, 210.0, 250.0], [3.0, 5.0, 7.0, 12.0, 25.0, 50.0]),
        }
    }
}

/// A 4×4 board of LEDs on a dark panel. Pixel luminance inside LED `i` is
/// `ambient + amplitude * w_i(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedBoardScene {
    pub width: u16,
    pub height: u16,
    pub ambient: f64,
    pub amplitude: f64,
    pub leds: Vec<LedSpec>,
}

impl LedBoardScene {
    pub const LED_RADIUS: f64 = 0.07;

    /// Top row square LEDs; rows 2-4 hold sines in the left two columns and
    /// triangles in the right two, sharing frequencies pairwise.
    pub fn desk(width: u16, height: u16, set: LedSet) -> Self {
        let (square, smooth) = set.frequencies();
        let (cw, ch) = (width as f64 / 4.0, height as f64 / 4.0);
        let radius = Self::LED_RADIUS * width.min(height) as f64;
        let center = |col: usize, row: usize| ((col as f64 + 0.5) * cw, (row as f64 + 0.5) * ch);
        let mut leds = Vec::with_capacity(16);
        for (col, &f) in square.iter().enumerate() {
            leds.push(LedSpec {
                center: center(col, 0),
                radius,
                waveform: Waveform::Square,
                frequency: f,
                duty: 0.5,
            });
        }
        for (k, &f) in smooth.iter().enumerate() {
            let (row, col) = (1 + k / 2, k % 2);
            leds.push(LedSpec {
                center: center(col, row),
                radius,
                waveform: Waveform::Sine,
                frequency: f,
                duty: 0.5,
            });
            leds.push(LedSpec {
                center: center(col + 2, row),
                radius,
                waveform: Waveform::Triangle,
                frequency: f,
                duty: 0.5,
            });
        }
        Self {
            width,
            height,
            ambient: 0.1,
            amplitude: 0.8,
            leds,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.ambient) || !(0.0..=1.0).contains(&(self.ambient + self.amplitude)) {
            return Err("LED luminance range must lie in [0, 1]".into());
        }
        for led in &self.leds {
            if !(led.frequency > 0.0) || !(led.radius > 0.0) || !(0.0..1.0).contains(&led.duty) {
                return Err(format!("bad LED {led:?}"));
            }
        }
        Ok(())
    }

    /// Pixel coordinates whose centers lie inside LED `i`.
    pub fn roi(&self, i: usize) -> Vec<(u16, u16)> {
        let led = &self.leds[i];
        let x0 = (led.center.0 - led.radius).floor().max(0.0) as u16;
        let y0 = (led.center.1 - led.radius).floor().max(0.0) as u16;
        let x1 = ((led.center.0 + led.radius).ceil() as u16).min(self.width);
        let y1 = ((led.center.1 + led.radius).ceil() as u16).min(self.height);
        (y0..y1)
            .flat_map(|y| (x0..x1).map(move |x| (x, y)))
            .filter(|&(x, y)| led.contains(x, y))
            .collect()
    }
}

impl IntensityField for LedBoardScene {
    fn width(&self) -> u16 {
        self.width
    }

    fn height(&self) -> u16 {
        self.height
    }

    fn intensity(&self, t_us: u64, x: u16, y: u16) -> f64 {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        for led in &self.leds {
            let (dx, dy) = (px - led.center.0, py - led.center.1);
            let c = disc_coverage((dx * dx + dy * dy).sqrt(), led.radius);
            if c > 0.0 {
                return self.ambient + c * self.amplitude * led.level(t_us);
            }
        }
        self.ambient
    }

    fn is_static(&self, x: u16, y: u16) -> bool {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        self.leds.iter().all(|led| {
            let (dx, dy) = (px - led.center.0, py - led.center.1);
            (dx * dx + dy * dy).sqrt() > led.radius + 1.0
        })
    }
}
