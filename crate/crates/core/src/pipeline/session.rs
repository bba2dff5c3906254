use super::frame::PreparedFrame;
use super::inverse::RendererInverse;
use crate::control::ControlVector;
use crate::error::{Error, Result};
use crate::mapping::{predict_controls, RegressorModel};
use crate::motion::{
    generate_intermediate, relative_transform, stitch, warp_features, IntermediateRepr, Keypoints,
    MotionParams, SourceCache, Stitcher, ZeroStitch,
};
use crate::synth::encode_appearance;

/// The humanoid source face: canonical keypoints and pose.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub canonical: Keypoints,
    pub params: MotionParams,
}

/// Per-session state: the cached source and the first driving frame's motion.
#[derive(Debug, Default)]
pub struct SessionState {
    cache: Option<SourceCache>,
    first_frame_params: Option<MotionParams>,
    frames_seen: u64,
    rebase_pending: bool,
}

impl SessionState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds the source cache at `resolution`. A session has one source.
    pub fn precompute_source(&mut self, source: &SourceSpec, resolution: (usize, usize)) -> Result<&SourceCache> {
        if self.cache.is_some() {
            return Err(Error::SessionState("source already precomputed for this session".into()));
        }
        let cache = SourceCache::build(source.canonical.clone(), source.params.clone(), |kp| {
            encode_appearance(kp, resolution)
        })?;
        Ok(self.cache.insert(cache))
    }

    pub fn cache(&self) -> Option<&SourceCache> {
        self.cache.as_ref()
    }

    pub fn first_frame_params(&self) -> Option<&MotionParams> {
        self.first_frame_params.as_ref()
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    /// Makes the next processed frame the new motion reference.
    pub fn request_rebase(&mut self) {
        self.rebase_pending = true;
    }
}

/// Where per-frame driving motion comes from.
#[derive(Debug, Clone)]
pub enum MotionSource {
    /// Only frames that carry sidecar params are usable.
    SidecarOnly,
    /// Sidecar when present, otherwise invert the toy renderer.
    Inverse(RendererInverse),
}

/// Motion transfer followed by control regression for single frames.
pub struct FrameProcessor {
    pub model: RegressorModel,
    pub motion: MotionSource,
    pub stitcher: Box<dyn Stitcher>,
}

impl FrameProcessor {
    pub fn new(model: RegressorModel, motion: MotionSource) -> Self {
        Self {
            model,
            motion,
            stitcher: Box::new(ZeroStitch),
        }
    }

    fn driving_motion(&self, frame: &PreparedFrame) -> Result<MotionParams> {
        if let Some(p) = &frame.sidecar {
            return Ok(p.clone());
        }
        match (&self.motion, &frame.image) {
            (MotionSource::Inverse(inv), Some(img)) => inv.estimate(img),
            _ => Err(Error::Validation(format!(
                "frame {} has no sidecar motion and no usable image",
                frame.seq
            ))),
        }
    }

    /// Motion-transferred humanoid image for one frame.
    pub fn intermediate(&self, frame: &PreparedFrame, state: &mut SessionState) -> Result<IntermediateRepr> {
        let Some(cache) = state.cache.as_ref() else {
            return Err(Error::SessionState("no source precomputed before the first frame".into()));
        };
        let drive_i = self.driving_motion(frame)?;
        drive_i.validate()?;
        let drive_0 = match &state.first_frame_params {
            Some(p) if !state.rebase_pending => p.clone(),
            _ => drive_i.clone(),
        };
        let driving = relative_transform(
            &drive_i,
            &drive_0,
            cache.source_params(),
            cache.canonical_keypoints(),
        )?;
        let driving = stitch(self.stitcher.as_ref(), cache.source_keypoints(), &driving)?;
        let warped = warp_features(cache.feature_volume(), cache.source_keypoints(), &driving)?;
        let repr = generate_intermediate(&warped, frame.seq);
        if state.first_frame_params.is_none() || state.rebase_pending {
            state.first_frame_params = Some(drive_0);
            state.rebase_pending = false;
        }
        state.frames_seen += 1;
        Ok(repr)
    }

    pub fn process_frame(&self, frame: &PreparedFrame, state: &mut SessionState) -> Result<ControlVector> {
        let repr = self.intermediate(frame, state)?;
        let mut cv = predict_controls(&self.model, &repr)?;
        cv.capture_ts = frame.capture_ts;
        Ok(cv)
    }
}
