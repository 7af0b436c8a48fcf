use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{Event, EventRecording, Polarity};

/// Per-pixel ON/OFF counts over `[window_start, window_start + window_length)`.
/// Grids are row-major, `y * width + x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccumulatedFrame {
    pub width: u16,
    pub height: u16,
    pub window_start: u64,
    pub window_length: u64,
    pub on_counts: Vec<u32>,
    pub off_counts: Vec<u32>,
}

impl AccumulatedFrame {
    pub fn zeros(width: u16, height: u16, window_start: u64, window_length: u64) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            window_start,
            window_length,
            on_counts: vec![0; n],
            off_counts: vec![0; n],
        }
    }

    pub fn from_events(
        width: u16,
        height: u16,
        window_start: u64,
        window_length: u64,
        events: &[Event],
    ) -> Self {
        let mut f = Self::zeros(width, height, window_start, window_length);
        for e in events {
            let i = f.index(e.x, e.y);
            match e.polarity {
                Polarity::On => f.on_counts[i] += 1,
                Polarity::Off => f.off_counts[i] += 1,
            }
        }
        f
    }

    #[inline]
    pub fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn total(&self) -> u64 {
        self.on_counts
            .iter()
            .chain(&self.off_counts)
            .map(|&c| c as u64)
            .sum()
    }
}

/// Accumulates the events of `rec` that fall in the half-open window.
pub fn accumulate(
    rec: &EventRecording,
    window_start: u64,
    window_length: u64,
) -> Result<AccumulatedFrame> {
    let end = window_start.checked_add(window_length);
    match end {
        Some(end) if end <= rec.duration => {
            let events = rec.events_in(window_start, end);
            Ok(AccumulatedFrame::from_events(
                rec.width,
                rec.height,
                window_start,
                window_length,
                events,
            ))
        }
        _ => Err(Error::WindowOutOfRange {
            start: window_start,
            length: window_length,
            duration: rec.duration,
        }),
    }
}
