//! Bias-tuning workbench for event cameras.
//!
//! The crate is split along the pipeline a tuning experiment runs through:
//!
//! - [`bias`], [`events`], [`format`], [`frame`], [`manifest`]: shared domain
//!   types, the `BBE1` recording format and frame accumulation.
//! - [`sim`]: a per-pixel DVS circuit model driven by a [`scenes::IntensityField`].
//! - [`scenes`]: the spinning-dot and blinking-LED-board stimuli.
//! - [`bench`]: grid construction, corpus recording and the file-swap MDP
//!   environment.
//! - [`metrics`]: tracking, frequency (RFU), event-rate heat maps and APE.
//! - [`tuner`]: the behavior-cloned policy and the rule-based controller.

pub mod bench;
pub mod bias;
pub mod error;
pub mod events;
pub mod format;
pub mod frame;
pub mod manifest;
pub mod metrics;
pub mod scenes;
pub mod sim;
pub mod tuner;

pub use bias::{BiasAction, BiasAxis, BiasDelta, BiasLimits, BiasSettings};
pub use error::{Error, Result};
pub use events::{event_rate, Event, EventRecording, Polarity};
pub use frame::{accumulate, AccumulatedFrame};
pub use manifest::{BiasGrid, DatasetManifest, ManifestEntry};
