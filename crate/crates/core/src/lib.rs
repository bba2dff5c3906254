//! Real-time facial expression shadowing engine.
//!
//! A driving face stream is retargeted onto a cached source face through
//! implicit-keypoint motion transfer, the resulting intermediate image is
//! mapped to actuator control values, and the controls are streamed to a
//! robot sink without blocking generation.

pub mod control;
pub mod dataset;
pub mod error;
pub mod gan;
pub mod grid;
pub mod latency;
pub mod mapping;
pub mod metrics;
pub mod motion;
pub mod pipeline;
pub mod synth;
pub mod wire;

pub use control::{ControlVector, NUM_CONTROLS};
pub use error::{Error, Result};
pub use grid::Grid;
