use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Linear warmup from 0 to `base_lr`, then cosine decay to 0 at `total_steps`.
pub fn cosine_warmup_lr(step: u64, total_steps: u64, base_lr: f64, warmup_steps: u64) -> Result<f64> {
    if warmup_steps > total_steps {
        return Err(Error::Config(format!(
            "warmup steps {warmup_steps} exceed total steps {total_steps}"
        )));
    }
    if step > total_steps {
        return Err(Error::Config(format!(
            "step {step} beyond schedule length {total_steps}"
        )));
    }
    if step < warmup_steps {
        return Ok(base_lr * step as f64 / warmup_steps as f64);
    }
    let decay_steps = total_steps - warmup_steps;
    if decay_steps == 0 {
        return Ok(base_lr);
    }
    let progress = (step - warmup_steps) as f64 / decay_steps as f64;
    Ok(base_lr * 0.5 * (1.0 + (PI * progress).cos()))
}
