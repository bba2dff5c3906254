//! Streaming shadowing runtime: source caching, per-frame motion transfer
//! and control regression, and non-blocking transmission.

mod frame;
mod inverse;
mod io;
mod queue;
mod session;
mod stream;

pub use frame::{
    prepare_frame, preprocess, wall_micros, Frame, FramePayload, PreparedFrame, FRAME_HEIGHT,
    FRAME_WIDTH,
};
pub use inverse::{RendererInverse, INVERSE_THUMB};
pub use io::{
    CollectSink, ControlSink, FrameSource, NullSink, ReaderSource, SocketSink, StallSink,
    SyntheticSource, VecSource, WriterSink, DEFAULT_FRAME_PORT,
};
pub use queue::{QueueStats, StageQueue, DEFAULT_QUEUE_CAPACITY};
pub use session::{FrameProcessor, MotionSource, SessionState, SourceSpec};
pub use stream::{
    process_sequence, run_stream, PipelineConfig, QueueReport, SessionReport,
};

use crate::error::Result;
use crate::mapping::{RegressorModel, DEFAULT_FEATURE_DIM};
use crate::synth::{ExpressionParams, SynthWorld};

/// Renders used to fit the toy motion inverse.
pub const INVERSE_FIT_SAMPLES: usize = 400;
const INVERSE_RIDGE: f64 = 1e-2;

/// Neutral humanoid source built from the world's canonical face.
pub fn toy_source(world: &SynthWorld) -> Result<SourceSpec> {
    Ok(SourceSpec {
        canonical: world.canonical.clone(),
        params: world.synth_motion(&ExpressionParams::neutral())?,
    })
}

/// Processor for the toy world: the given model (or a fresh seeded one)
/// and a fitted renderer inverse.
pub fn toy_processor(world: &SynthWorld, cfg: &PipelineConfig, model: Option<RegressorModel>) -> Result<FrameProcessor> {
    let model = match model {
        Some(m) => m,
        None => RegressorModel::new(cfg.model_input, cfg.model_input, &[DEFAULT_FEATURE_DIM], cfg.seed)?,
    };
    let inverse = RendererInverse::fit(
        world,
        (cfg.preprocess_size, cfg.preprocess_size),
        INVERSE_FIT_SAMPLES,
        INVERSE_RIDGE,
        cfg.seed.wrapping_add(1_000_000),
    )?;
    Ok(FrameProcessor::new(model, MotionSource::Inverse(inverse)))
}

/// Fresh session with the toy source cached at the model's input size.
pub fn toy_session(world: &SynthWorld, cfg: &PipelineConfig) -> Result<SessionState> {
    let mut state = SessionState::new();
    state.precompute_source(&toy_source(world)?, (cfg.model_input, cfg.model_input))?;
    Ok(state)
}
