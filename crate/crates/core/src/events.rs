use serde::{Deserialize, Serialize};

use crate::bias::BiasSettings;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Polarity {
    Off = 0,
    On = 1,
}

impl Polarity {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    pub fn sign(self) -> i64 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }
}

/// A single DVS event. Field order gives the canonical sort key
/// `(t, y, x, polarity)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event {
    /// Microseconds since recording start.
    pub t: u64,
    pub y: u16,
    pub x: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Self { t, y, x, polarity }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecording {
    pub width: u16,
    pub height: u16,
    pub duration: u64,
    pub biases: BiasSettings,
    pub scene_id: String,
    pub seed: u64,
    pub events: Vec<Event>,
}

impl EventRecording {
    pub fn empty(width: u16, height: u16, duration: u64) -> Self {
        Self {
            width,
            height,
            duration,
            biases: BiasSettings::default(),
            scene_id: String::new(),
            seed: 0,
            events: Vec::new(),
        }
    }

    /// Checks geometry bounds, timestamps and strict canonical ordering.
    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.events.iter().enumerate() {
            if e.x >= self.width || e.y >= self.height {
                return Err(Error::InvalidRecording(format!(
                    "event {i} at ({}, {}) outside {}x{} sensor",
                    e.x, e.y, self.width, self.height
                )));
            }
            if e.t >= self.duration {
                return Err(Error::InvalidRecording(format!(
                    "event {i} at t={} not before duration {}",
                    e.t, self.duration
                )));
            }
        }
        if let Some(i) = self.events.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidRecording(format!(
                "events {i} and {} not strictly ordered by (t, y, x, polarity)",
                i + 1
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events with `start <= t < end`. Relies on the time ordering.
    pub fn events_in(&self, start: u64, end: u64) -> &[Event] {
        let lo = self.events.partition_point(|e| e.t < start);
        let hi = self.events.partition_point(|e| e.t < end);
        &self.events[lo..hi.max(lo)]
    }
}

/// Mean event rate in events per second.
pub fn event_rate(rec: &EventRecording) -> Result<f64> {
    if rec.duration == 0 {
        return Err(Error::ZeroDuration);
    }
    Ok(rec.events.len() as f64 / (rec.duration as f64 * 1e-6))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec_with(n: usize, duration: u64) -> EventRecording {
        let mut r = EventRecording::empty(32, 32, duration);
        r.events = (0..n as u64)
            .map(|i| Event::new(i * duration / n as u64, 0, 0, Polarity::On))
            .collect();
        r
    }

    #[test]
    fn rate_examples() {
        assert_eq!(event_rate(&rec_with(1000, 1_000_000)).unwrap(), 1000.0);
        assert_eq!(event_rate(&rec_with(0, 1_000_000)).unwrap(), 0.0);
        assert_eq!(event_rate(&rec_with(500, 500_000)).unwrap(), 1000.0);
        assert!(matches!(
            event_rate(&EventRecording::empty(1, 1, 0)),
            Err(Error::ZeroDuration)
        ));
    }

    #[test]
    fn sort_key_is_t_y_x_polarity() {
        let a = Event::new(5, 9, 0, Polarity::On);
        let b = Event::new(5, 0, 1, Polarity::Off);
        assert!(a < b, "row dominates column");
        assert!(Event::new(5, 1, 1, Polarity::Off) < Event::new(5, 1, 1, Polarity::On));
    }

    #[test]
    fn validate_rejects_duplicates_and_late_events() {
        let mut r = EventRecording::empty(4, 4, 100);
        r.events = vec![Event::new(1, 0, 0, Polarity::On); 2];
        assert!(r.validate().is_err());
        r.events = vec![Event::new(100, 0, 0, Polarity::On)];
        assert!(r.validate().is_err());
        r.events = vec![Event::new(99, 3, 3, Polarity::On)];
        assert!(r.validate().is_ok());
        r.events = vec![Event::new(9, 4, 0, Polarity::On)];
        assert!(r.validate().is_err());
    }
}
