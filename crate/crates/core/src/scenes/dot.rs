use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{disc_coverage, IntensityField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DotPreset {
    Grey,
    Black,
}

impl DotPreset {
    pub fn dot_intensity(self) -> f64 {
        match self {
            DotPreset::Grey => 0.07,
            DotPreset::Black => 0.02,
        }
    }
}

/// A dot on a bright disk rotating at `rotation_rate` revolutions per second.
/// Geometry is in pixels; pixel `(x, y)` is sampled at `(x + 0.5, y + 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinningDotScene {
    pub width: u16,
    pub height: u16,
    pub disk_center: (f64, f64),
    pub disk_radius: f64,
    pub dot_radius: f64,
    pub dot_orbit_radius: f64,
    pub rotation_rate: f64,
    pub background_intensity: f64,
    pub disk_intensity: f64,
    pub dot_intensity: f64,
}

impl SpinningDotScene {
    pub const DISK_RADIUS: f64 = 0.45;
    pub const ORBIT_RADIUS: f64 = 0.30;
    pub const DOT_RADIUS: f64 = 0.02;

    /// Desk-scale layout; sizes are fractions of `min(width, height)` so any
    /// sensor resolution gives the same picture.
    pub fn desk(width: u16, height: u16, preset: DotPreset) -> Self {
        let s = width.min(height) as f64;
        Self {
            width,
            height,
            disk_center: (width as f64 / 2.0, height as f64 / 2.0),
            disk_radius: Self::DISK_RADIUS * s,
            dot_radius: (Self::DOT_RADIUS * s).max(1.5),
            dot_orbit_radius: Self::ORBIT_RADIUS * s,
            rotation_rate: 10.0,
            background_intensity: 0.3,
            disk_intensity: 0.9,
            dot_intensity: preset.dot_intensity(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.dot_orbit_radius + self.dot_radius >= self.disk_radius {
            return Err("dot must lie strictly inside the disk".into());
        }
        if !(self.rotation_rate > 0.0) {
            return Err("rotation rate must be positive".into());
        }
        for v in [self.background_intensity, self.disk_intensity, self.dot_intensity] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("intensity {v} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Dot center in pixel coordinates at time `t_us`.
    pub fn dot_center(&self, t_us: u64) -> (f64, f64) {
        let turns = (self.rotation_rate * t_us as f64 * 1e-6).fract();
        let a = TAU * turns;
        (
            self.disk_center.0 + self.dot_orbit_radius * a.cos(),
            self.disk_center.1 + self.dot_orbit_radius * a.sin(),
        )
    }

    /// Mean dot position over `[start, start + length)`, i.e. the point a
    /// blob detector sees for a window accumulated over that interval.
    pub fn expected_position(&self, start: u64, length: u64) -> (f64, f64) {
        const STEPS: u64 = 16;
        let (mut sx, mut sy) = (0.0, 0.0);
        for k in 0..STEPS {
            let t = start + (2 * k + 1) * length / (2 * STEPS);
            let (x, y) = self.dot_center(t);
            sx += x;
            sy += y;
        }
        (sx / STEPS as f64, sy / STEPS as f64)
    }

    /// Tracking region: the disk interior, one dot diameter away from its rim.
    pub fn roi_contains(&self, x: u16, y: u16) -> bool {
        let (dx, dy) = (
            x as f64 + 0.5 - self.disk_center.0,
            y as f64 + 0.5 - self.disk_center.1,
        );
        (dx * dx + dy * dy).sqrt() <= self.disk_radius - 2.0 * self.dot_radius
    }
}

impl IntensityField for SpinningDotScene {
    fn width(&self) -> u16 {
        self.width
    }

    fn height(&self) -> u16 {
        self.height
    }

    fn intensity(&self, t_us: u64, x: u16, y: u16) -> f64 {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let (dx, dy) = (px - self.disk_center.0, py - self.disk_center.1);
        let disk = disc_coverage((dx * dx + dy * dy).sqrt(), self.disk_radius);
        let v = self.background_intensity + disk * (self.disk_intensity - self.background_intensity);
        let (cx, cy) = self.dot_center(t_us);
        let (ex, ey) = (px - cx, py - cy);
        let dot = disc_coverage((ex * ex + ey * ey).sqrt(), self.dot_radius);
        dot * self.dot_intensity + (1.0 - dot) * v
    }

    fn is_static(&self, x: u16, y: u16) -> bool {
        let (dx, dy) = (
            x as f64 + 0.5 - self.disk_center.0,
            y as f64 + 0.5 - self.disk_center.1,
        );
        let r = (dx * dx + dy * dy).sqrt();
        // pixel centers further than radius + 1 from the orbit never see the dot
        (r - self.dot_orbit_radius).abs() > self.dot_radius + 1.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> SpinningDotScene {
        let mut s = SpinningDotScene::desk(128, 128, DotPreset::Grey);
        s.dot_radius = 6.0;
        s
    }

    fn raster(s: &SpinningDotScene, t: u64) -> Vec<f64> {
        (0..s.height)
            .flat_map(|y| (0..s.width).map(move |x| (x, y)))
            .map(|(x, y)| s.intensity(t, x, y))
            .collect()
    }

    #[test]
    fn full_period_repeats() {
        let s = scene();
        assert_eq!(raster(&s, 0), raster(&s, 100_000));
    }

    #[test]
    fn dot_at_angle_zero() {
        let s = scene();
        let x = (s.disk_center.0 + s.dot_orbit_radius) as u16;
        let y = s.disk_center.1 as u16;
        assert_eq!(s.intensity(0, x, y), s.dot_intensity);
    }

    #[test]
    fn centroid_travels_half_turn_in_50ms() {
        // brute-force centroid of dark pixels in two rasterized frames
        let s = scene();
        let thresh = (s.disk_intensity + s.dot_intensity) / 2.0;
        let centroid = |t| {
            let img = raster(&s, t);
            let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
            for (i, v) in img.iter().enumerate() {
                let (x, y) = ((i % 128) as f64 + 0.5, (i / 128) as f64 + 0.5);
                let inside = ((x - 64.0).powi(2) + (y - 64.0).powi(2)).sqrt() < s.disk_radius - 1.0;
                if inside && *v < thresh {
                    sx += x;
                    sy += y;
                    n += 1.0;
                }
            }
            ((sx / n - 64.0), (sy / n - 64.0))
        };
        let (x0, y0) = centroid(0);
        let (x1, y1) = centroid(50_000);
        let d = (y1.atan2(x1) - y0.atan2(x0)).rem_euclid(TAU);
        let expected = TAU * 10.0 * 0.05;
        assert!((d - expected).abs() < 1e-6, "angle {d} vs {expected}");
    }

    #[test]
    fn static_pixels_never_change() {
        let s = scene();
        for y in 0..128 {
            for x in 0..128 {
                if s.is_static(x, y) {
                    let v0 = s.intensity(0, x, y);
                    for t in (0..100_000).step_by(1_000) {
                        assert_eq!(s.intensity(t, x, y), v0);
                    }
                }
            }
        }
    }

    #[test]
    fn presets_order_contrast() {
        assert!(DotPreset::Black.dot_intensity() < DotPreset::Grey.dot_intensity());
        assert!(scene().validate().is_ok());
        let mut bad = scene();
        bad.dot_orbit_radius = bad.disk_radius;
        assert!(bad.validate().is_err());
    }
}
