use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of actuator control values per expression.
pub const NUM_CONTROLS: usize = 30;

/// Normalized actuator command for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlVector {
    pub values: Vec<f64>,
    pub seq: u64,
    /// Microseconds since the Unix epoch.
    pub capture_ts: u64,
    pub send_ts: u64,
}

impl ControlVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let cv = Self {
            values,
            seq: 0,
            capture_ts: 0,
            send_ts: 0,
        };
        cv.validate()?;
        Ok(cv)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != NUM_CONTROLS {
            return Err(Error::Validation(format!(
                "control vector must have {NUM_CONTROLS} values, got {}",
                self.values.len()
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("control value {v} outside [0, 1]")));
        }
        Ok(())
    }
}
