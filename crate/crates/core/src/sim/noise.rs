use crate::error::{Error, Result};
use crate::events::EventRecording;

/// Fraction of events without support: no other event within Chebyshev
/// distance `radius` (same pixel included) and `|Δt| <= dt_us`. This is the
/// rejection rule of a background-activity filter.
pub fn noise_fraction_estimate(rec: &EventRecording, dt_us: u64, radius: u16) -> Result<f64> {
    if dt_us == 0 || radius == 0 {
        return Err(Error::InvalidArgument(
            "noise filter needs dt_us > 0 and radius >= 1".into(),
        ));
    }
    if rec.events.is_empty() {
        return Ok(0.0);
    }
    let (w, h) = (rec.width as usize, rec.height as usize);
    // per-pixel sorted timestamps; events are already time ordered
    let mut times: Vec<Vec<u64>> = vec![Vec::new(); w * h];
    for e in &rec.events {
        times[e.y as usize * w + e.x as usize].push(e.t);
    }
    let r = radius as i64;
    let isolated = rec
        .events
        .iter()
        .filter(|e| {
            let lo = e.t.saturating_sub(dt_us);
            let hi = e.t.saturating_add(dt_us);
            for ny in (e.y as i64 - r).max(0)..=(e.y as i64 + r).min(h as i64 - 1) {
                for nx in (e.x as i64 - r).max(0)..=(e.x as i64 + r).min(w as i64 - 1) {
                    let ts = &times[ny as usize * w + nx as usize];
                    let a = ts.partition_point(|&t| t < lo);
                    let b = ts.partition_point(|&t| t <= hi);
                    // the event itself sits in its own pixel's range
                    let own = usize::from(nx == e.x as i64 && ny == e.y as i64);
                    if b - a > own {
                        return false;
                    }
                }
            }
            true
        })
        .count();
    Ok(isolated as f64 / rec.events.len() as f64)
}
