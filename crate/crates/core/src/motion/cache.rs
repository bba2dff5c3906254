use crate::error::Result;

use super::{transform_keypoints, FeatureVolume, Keypoints, MotionParams};

/// Source keypoints and features, computed once before streaming starts.
#[derive(Debug, Clone)]
pub struct SourceCache {
    canonical_keypoints: Keypoints,
    source_params: MotionParams,
    source_keypoints: Keypoints,
    feature_volume: FeatureVolume,
    compute_count: usize,
}

impl SourceCache {
    /// Runs the source transform and the appearance encoder exactly once.
    pub fn build(
        canonical_keypoints: Keypoints,
        source_params: MotionParams,
        encode_appearance: impl FnOnce(&Keypoints) -> Result<FeatureVolume>,
    ) -> Result<Self> {
        let source_keypoints = transform_keypoints(&canonical_keypoints, &source_params)?;
        let feature_volume = encode_appearance(&source_keypoints)?;
        Ok(Self {
            canonical_keypoints,
            source_params,
            source_keypoints,
            feature_volume,
            compute_count: 1,
        })
    }

    pub fn canonical_keypoints(&self) -> &Keypoints {
        &self.canonical_keypoints
    }

    pub fn source_params(&self) -> &MotionParams {
        &self.source_params
    }

    pub fn source_keypoints(&self) -> &Keypoints {
        &self.source_keypoints
    }

    pub fn feature_volume(&self) -> &FeatureVolume {
        &self.feature_volume
    }

    pub fn compute_count(&self) -> usize {
        self.compute_count
    }
}
