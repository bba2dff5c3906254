//! Second-stage mapping network: intermediate image to control values,
//! trained with a Huber regression loss plus a feature-adaptation term.

pub mod checkpoint;
mod loss;
mod model;
mod optim;
mod schedule;
mod train;

pub use loss::{
    feature_adaptation_grad, feature_adaptation_loss, huber_grad, huber_loss, loss_and_gradient,
    total_loss, LossBreakdown, TrainingPair,
};
pub use model::{Forward, RegressorModel, DEFAULT_FEATURE_DIM, INPUT_CENTER};
pub use optim::AdamW;
pub use schedule::cosine_warmup_lr;
pub use train::{
    backward_and_step, evaluate, train, EvalReport, OptimizerState, TrainConfig, TrainReport,
};

use crate::control::ControlVector;
use crate::error::Result;
use crate::motion::IntermediateRepr;

/// `y_hat = M2(I_m)`, stamped with the representation's frame sequence.
pub fn predict_controls(model: &RegressorModel, repr: &IntermediateRepr) -> Result<ControlVector> {
    let fwd = model.forward(&repr.grid)?;
    Ok(ControlVector {
        values: fwd.prediction,
        seq: repr.frame_seq,
        capture_ts: 0,
        send_ts: 0,
    })
}
