use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventRecording;
use crate::scenes::SpinningDotScene;

/// Pixel mask restricting where blobs are detected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roi {
    pub width: u16,
    pub height: u16,
    mask: Vec<bool>,
}

impl Roi {
    pub fn from_fn(width: u16, height: u16, f: impl Fn(u16, u16) -> bool) -> Self {
        let mask = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self { width, height, mask }
    }

    pub fn full(width: u16, height: u16) -> Self {
        Self::from_fn(width, height, |_, _| true)
    }

    /// Pixels whose centers lie within `radius` of `center`.
    pub fn disc(width: u16, height: u16, center: (f64, f64), radius: f64) -> Self {
        Self::from_fn(width, height, |x, y| {
            let (dx, dy) = (x as f64 + 0.5 - center.0, y as f64 + 0.5 - center.1);
            dx * dx + dy * dy <= radius * radius
        })
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height && self.mask[y as usize * self.width as usize + x as usize]
    }

    pub fn area(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub window_us: u64,
    pub area_min: usize,
    /// Upper blob area as a fraction of the ROI area.
    pub area_max_fraction: f64,
    /// Association gate in pixels.
    pub r_assoc: f64,
    /// Consecutive unmatched windows after which a tracklet ends.
    pub m_miss: usize,
    /// Gate around a constant-velocity prediction instead of the last
    /// centroid once a tracklet has two observations.
    pub predict: bool,
    /// Active pixels up to this Chebyshev distance apart join one blob;
    /// 1 is plain 8-connectivity.
    pub link_distance: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            window_us: 1000,
            area_min: 4,
            area_max_fraction: 0.25,
            r_assoc: 3.0,
            m_miss: 5,
            predict: true,
            link_distance: 2,
        }
    }
}

impl TrackerConfig {
    /// Defaults with the gate set to 1.5 times the dot's per-window travel
    /// and a link distance of at least the dot radius, which joins the OFF
    /// arc of the leading edge to the ON arc of the trailing edge.
    pub fn for_dot(scene: &SpinningDotScene) -> Self {
        let mut c = Self::default();
        c.link_distance = c.link_distance.max(scene.dot_radius.ceil() as usize);
        let travel = std::f64::consts::TAU * scene.dot_orbit_radius * scene.rotation_rate * c.window_us as f64 * 1e-6;
        c.r_assoc = 1.5 * travel;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracklet {
    pub id: usize,
    /// Window indices with an associated blob, strictly increasing.
    pub windows: Vec<usize>,
    pub centroids: Vec<(f64, f64)>,
}

impl Tracklet {
    pub fn birth(&self) -> usize {
        self.windows[0]
    }

    pub fn death(&self) -> usize {
        self.windows[self.windows.len() - 1]
    }

    fn predicted(&self, window: usize, predict: bool) -> (f64, f64) {
        let n = self.centroids.len();
        let last = self.centroids[n - 1];
        if !predict || n < 2 {
            return last;
        }
        let prev = self.centroids[n - 2];
        let span = (self.windows[n - 1] - self.windows[n - 2]) as f64;
        let ahead = (window - self.windows[n - 1]) as f64;
        (
            last.0 + (last.0 - prev.0) / span * ahead,
            last.1 + (last.1 - prev.1) / span * ahead,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    /// Dot-associated tracklets.
    pub tf: usize,
    /// Fraction of windows covered by a dot-associated tracklet.
    pub tl: f64,
    pub n_tracklets: usize,
}

/// Centroids of blobs of active pixels with area in `[lo, hi]`. Pixels
/// within Chebyshev distance `link` are connected.
pub fn blobs(active: &[bool], width: usize, height: usize, link: usize, lo: usize, hi: usize) -> Vec<(f64, f64)> {
    let mut seen = vec![false; active.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..active.len() {
        if !active[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % width, i / width);
            n += 1;
            sx += x as f64 + 0.5;
            sy += y as f64 + 0.5;
            for ny in y.saturating_sub(link)..=(y + link).min(height - 1) {
                for nx in x.saturating_sub(link)..=(x + link).min(width - 1) {
                    let j = ny * width + nx;
                    if active[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if (lo..=hi).contains(&n) {
            out.push((sx / n as f64, sy / n as f64));
        }
    }
    out
}

/// Blob tracker over fixed accumulation windows.
pub fn track_spatters(rec: &EventRecording, roi: &Roi, cfg: &TrackerConfig) -> Result<Vec<Tracklet>> {
    if roi.width != rec.width || roi.height != rec.height {
        return Err(Error::InvalidArgument(format!(
            "roi is {}x{}, recording is {}x{}",
            roi.width, roi.height, rec.width, rec.height
        )));
    }
    let area = roi.area();
    if area == 0 {
        return Err(Error::EmptyRoi);
    }
    if cfg.window_us == 0 {
        return Err(Error::InvalidArgument("window_us must be positive".into()));
    }
    let (w, h) = (rec.width as usize, rec.height as usize);
    let hi = ((cfg.area_max_fraction * area as f64).floor() as usize).max(cfg.area_min);
    let n_windows = rec.duration.div_ceil(cfg.window_us) as usize;

    let mut done: Vec<Tracklet> = Vec::new();
    // (tracklet, consecutive misses)
    let mut live: Vec<(Tracklet, usize)> = Vec::new();
    let mut next_id = 0;
    let mut active = vec![false; w * h];
    let mut touched = Vec::new();

    for k in 0..n_windows {
        let start = k as u64 * cfg.window_us;
        for e in rec.events_in(start, start + cfg.window_us) {
            if roi.contains(e.x, e.y) {
                let i = e.y as usize * w + e.x as usize;
                if !active[i] {
                    active[i] = true;
                    touched.push(i);
                }
            }
        }
        let found = blobs(&active, w, h, cfg.link_distance.max(1), cfg.area_min, hi);
        for i in touched.drain(..) {
            active[i] = false;
        }

        // greedy nearest association
        let mut pairs = Vec::new();
        for (ti, (t, _)) in live.iter().enumerate() {
            let p = t.predicted(k, cfg.predict);
            for (bi, c) in found.iter().enumerate() {
                let d = ((c.0 - p.0).powi(2) + (c.1 - p.1).powi(2)).sqrt();
                if d <= cfg.r_assoc {
                    pairs.push((d, ti, bi));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut t_used = vec![false; live.len()];
        let mut b_used = vec![false; found.len()];
        for (_, ti, bi) in pairs {
            if t_used[ti] || b_used[bi] {
                continue;
            }
            t_used[ti] = true;
            b_used[bi] = true;
            live[ti].0.windows.push(k);
            live[ti].0.centroids.push(found[bi]);
            live[ti].1 = 0;
        }
        let mut kept = Vec::with_capacity(live.len());
        for (ti, (t, misses)) in live.into_iter().enumerate() {
            let misses = if t_used[ti] { misses } else { misses + 1 };
            if misses >= cfg.m_miss {
                done.push(t);
            } else {
                kept.push((t, misses));
            }
        }
        live = kept;
        for (bi, c) in found.iter().enumerate() {
            if !b_used[bi] {
                live.push((
                    Tracklet {
                        id: next_id,
                        windows: vec![k],
                        centroids: vec![*c],
                    },
                    0,
                ));
                next_id += 1;
            }
        }
    }
    done.extend(live.into_iter().map(|(t, _)| t));
    done.sort_by_key(|t| t.id);
    Ok(done)
}

/// Scores tracklets against the expected dot position of each window.
/// A tracklet belongs to the dot when at least 70% of its centroids lie
/// within `r_dot`; a dot tracklet covers every window from birth to death.
pub fn tracking_metrics(
    tracklets: &[Tracklet],
    dot_path: impl Fn(usize) -> (f64, f64),
    n_windows: usize,
    r_dot: f64,
) -> TrackingMetrics {
    let mut covered = BTreeSet::new();
    let mut tf = 0;
    for t in tracklets {
        let near = t
            .windows
            .iter()
            .zip(&t.centroids)
            .filter(|(&k, c)| {
                let p = dot_path(k);
                ((c.0 - p.0).powi(2) + (c.1 - p.1).powi(2)).sqrt() <= r_dot
            })
            .count();
        if near as f64 >= 0.7 * t.windows.len() as f64 {
            tf += 1;
            covered.extend((t.birth()..=t.death()).filter(|&k| k < n_windows));
        }
    }
    TrackingMetrics {
        tf,
        tl: if n_windows == 0 {
            0.0
        } else {
            covered.len() as f64 / n_windows as f64
        },
        n_tracklets: tracklets.len(),
    }
}

/// Tracker metrics of a spinning-dot recording, with the ROI, gate and
/// expected path taken from the scene geometry.
pub fn dot_tracking(rec: &EventRecording, scene: &SpinningDotScene) -> Result<TrackingMetrics> {
    let cfg = TrackerConfig::for_dot(scene);
    let roi = Roi::from_fn(rec.width, rec.height, |x, y| scene.roi_contains(x, y));
    let tracklets = track_spatters(rec, &roi, &cfg)?;
    let n_windows = rec.duration.div_ceil(cfg.window_us) as usize;
    let r_dot = scene.dot_radius + cfg.r_assoc;
    Ok(tracking_metrics(
        &tracklets,
        |k| scene.expected_position(k as u64 * cfg.window_us, cfg.window_us),
        n_windows,
        r_dot,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{Event, Polarity};

    fn square_blob(events: &mut Vec<Event>, t: u64, cx: u16, cy: u16) {
        for y in cy..cy + 3 {
            for x in cx..cx + 3 {
                events.push(Event::new(t, x, y, Polarity::On));
            }
        }
    }

    fn rec(events: Vec<Event>, duration: u64) -> EventRecording {
        let mut r = EventRecording::empty(64, 64, duration);
        r.events = events;
        r.events.sort();
        r
    }

    fn cfg() -> TrackerConfig {
        TrackerConfig {
            r_assoc: 3.0,
            ..TrackerConfig::default()
        }
    }

    #[test]
    fn components_respect_link_distance() {
        let mut a = vec![false; 16];
        // diagonal chain of four pixels in a 4x4 image
        for i in [0, 5, 10, 15] {
            a[i] = true;
        }
        let b = blobs(&a, 4, 4, 1, 1, 16);
        assert_eq!(b, vec![(2.0, 2.0)]);
        assert!(blobs(&a, 4, 4, 1, 5, 16).is_empty());
        // a one-pixel gap splits at link 1 and joins at link 2
        let mut g = vec![false; 16];
        g[0] = true;
        g[2] = true;
        assert_eq!(blobs(&g, 4, 4, 1, 1, 16).len(), 2);
        assert_eq!(blobs(&g, 4, 4, 2, 1, 16), vec![(1.5, 0.5)]);
    }

    #[test]
    fn moving_blob_is_one_tracklet() {
        let mut ev = Vec::new();
        for k in 0..50u64 {
            square_blob(&mut ev, k * 1000 + 10, 5 + k as u16, 20);
        }
        let t = track_spatters(&rec(ev, 50_000), &Roi::full(64, 64), &cfg()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].windows, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn static_blobs_are_two_tracklets() {
        let mut ev = Vec::new();
        for k in 0..20u64 {
            square_blob(&mut ev, k * 1000, 5, 5);
            square_blob(&mut ev, k * 1000, 40, 40);
        }
        let t = track_spatters(&rec(ev, 20_000), &Roi::full(64, 64), &cfg()).unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn long_gap_splits_tracklet() {
        let mut ev = Vec::new();
        for k in (0..10u64).chain(20..30) {
            square_blob(&mut ev, k * 1000, 10, 10);
        }
        let t = track_spatters(&rec(ev.clone(), 30_000), &Roi::full(64, 64), &cfg()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].death(), 9);
        assert_eq!(t[1].birth(), 20);

        // a gap shorter than the miss tolerance is bridged
        let mut ev = Vec::new();
        for k in (0..10u64).chain(14..30) {
            square_blob(&mut ev, k * 1000, 10, 10);
        }
        let t = track_spatters(&rec(ev, 30_000), &Roi::full(64, 64), &cfg()).unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn small_and_outside_blobs_ignored() {
        let mut ev = vec![Event::new(0, 1, 1, Polarity::On), Event::new(0, 2, 1, Polarity::Off)];
        square_blob(&mut ev, 0, 50, 50);
        let roi = Roi::from_fn(64, 64, |x, _| x < 32);
        let t = track_spatters(&rec(ev, 1000), &roi, &cfg()).unwrap();
        assert!(t.is_empty());
        let empty = Roi::from_fn(64, 64, |_, _| false);
        assert!(matches!(track_spatters(&rec(vec![], 1000), &empty, &cfg()), Err(Error::EmptyRoi)));
    }

    fn tracklet(id: usize, windows: std::ops::Range<usize>, at: (f64, f64)) -> Tracklet {
        Tracklet {
            id,
            centroids: windows.clone().map(|_| at).collect(),
            windows: windows.collect(),
        }
    }

    #[test]
    fn metric_cases() {
        let path = |_k: usize| (10.0, 10.0);
        let perfect = tracklet(0, 0..100, (10.0, 10.0));
        assert_eq!(
            tracking_metrics(std::slice::from_ref(&perfect), path, 100, 2.0),
            TrackingMetrics { tf: 1, tl: 1.0, n_tracklets: 1 }
        );
        let mut set = vec![perfect];
        for i in 1..4 {
            set.push(tracklet(i, 0..30, (40.0, 40.0 + i as f64)));
        }
        assert_eq!(
            tracking_metrics(&set, path, 100, 2.0),
            TrackingMetrics { tf: 1, tl: 1.0, n_tracklets: 4 }
        );
        let halves = [tracklet(0, 0..40, (10.0, 10.0)), tracklet(1, 60..100, (10.0, 10.0))];
        let m = tracking_metrics(&halves, path, 100, 2.0);
        assert_eq!(m.tf, 2);
        assert!((m.tl - 0.8).abs() < 1e-12);
    }
}
