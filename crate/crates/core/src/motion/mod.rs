//! Implicit-keypoint motion transfer.
//!
//! Keypoints are stored as `K x 3` rows and rotations act on the right:
//! a transformed keypoint row is `x * R`, never `R * x`. Every rotation
//! constructor in this module builds matrices for that row-vector convention.

mod cache;
mod warp;

pub use cache::SourceCache;
pub use warp::{
    generate_intermediate, project_to_grid, warp_features, FeatureVolume, IntermediateRepr,
    WARP_BANDWIDTH,
};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Keypoint count used throughout a default session.
pub const DEFAULT_KEYPOINTS: usize = 21;

const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoints {
    pub points: Vec<[f64; 3]>,
}

impl Keypoints {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        let kp = Self { points };
        kp.validate()?;
        Ok(kp)
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            points: vec![[0.0; 3]; k],
        }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(self.points.as_flattened(), "keypoints")
    }

    pub fn as_flat(&self) -> &[f64] {
        self.points.as_flattened()
    }

    fn check_same_k(&self, other: &Keypoints, what: &str) -> Result<()> {
        if self.k() != other.k() {
            return Err(Error::Dimension(format!(
                "{what}: expected {} keypoints, got {}",
                self.k(),
                other.k()
            )));
        }
        Ok(())
    }

    /// Elementwise sum with another `K x 3` array.
    pub fn add(&self, other: &Keypoints) -> Result<Keypoints> {
        self.check_same_k(other, "keypoint addition")?;
        let points = self
            .points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
            .collect();
        Ok(Keypoints { points })
    }

    pub fn sub(&self, other: &Keypoints) -> Result<Keypoints> {
        self.check_same_k(other, "keypoint subtraction")?;
        let points = self
            .points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]])
            .collect();
        Ok(Keypoints { points })
    }

    pub fn max_abs_diff(&self, other: &Keypoints) -> f64 {
        self.as_flat()
            .iter()
            .zip(other.as_flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Rotation acting on row vectors (`x * R`) by `angle` radians about z.
pub fn rotation_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rotation_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c)
}

pub fn rotation_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c)
}

/// Head pose from Euler angles composed in Z * Y * X order
/// (roll about z, yaw about y, pitch about x).
pub fn rotation_from_euler(yaw: f64, pitch: f64, roll: f64) -> Matrix3<f64> {
    rotation_z(roll) * rotation_y(yaw) * rotation_x(pitch)
}

pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    let gram = r.transpose() * r;
    (gram - Matrix3::identity()).abs().max() <= tol && (r.determinant() - 1.0).abs() <= tol
}

/// Per-frame pose bundle: scale, rotation, deformation and translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionParams {
    pub rotation: Matrix3<f64>,
    pub scale: f64,
    pub deformation: Keypoints,
    pub translation: [f64; 3],
}

impl MotionParams {
    pub fn identity(k: usize) -> Self {
        Self {
            rotation: Matrix3::identity(),
            scale: 1.0,
            deformation: Keypoints::zeros(k),
            translation: [0.0; 3],
        }
    }

    pub fn k(&self) -> usize {
        self.deformation.k()
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(self.rotation.as_slice(), "rotation")?;
        ensure_finite(&self.translation, "translation")?;
        self.deformation.validate()?;
        if !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(Error::Numeric(format!(
                "scale must be positive and finite, got {}",
                self.scale
            )));
        }
        if !is_rotation(&self.rotation, ROTATION_TOL) {
            return Err(Error::Numeric(
                "rotation is not orthonormal with determinant +1".into(),
            ));
        }
        Ok(())
    }
}

/// `s * (x_c * R + delta) + t`, applied row by row.
pub fn transform_keypoints(canonical: &Keypoints, params: &MotionParams) -> Result<Keypoints> {
    if canonical.k() != params.k() {
        return Err(Error::Dimension(format!(
            "canonical keypoints have K={}, deformation has K={}",
            canonical.k(),
            params.k()
        )));
    }
    canonical.validate()?;
    params.validate()?;
    let r = &params.rotation;
    let s = params.scale;
    let t = params.translation;
    let points = canonical
        .points
        .iter()
        .zip(&params.deformation.points)
        .map(|(x, d)| {
            let mut out = [0.0; 3];
            for (j, o) in out.iter_mut().enumerate() {
                let rotated = x[0] * r[(0, j)] + x[1] * r[(1, j)] + x[2] * r[(2, j)];
                *o = s * (rotated + d[j]) + t[j];
            }
            out
        })
        .collect();
    Ok(Keypoints { points })
}

/// Pose of driving frame `i` re-expressed relative to the first driving frame
/// and anchored on the source pose.
///
/// Translation is carried over verbatim (`t_s + t_i - t_0`); no component is
/// zeroed. The rotation is composed literally as `R_i * R_0^-1 * R_s`.
pub fn relative_params(
    drive_i: &MotionParams,
    drive_0: &MotionParams,
    source: &MotionParams,
) -> Result<MotionParams> {
    if drive_0.scale <= 0.0 || !drive_0.scale.is_finite() {
        return Err(Error::Numeric(format!(
            "first driving frame scale must be positive, got {}",
            drive_0.scale
        )));
    }
    drive_i.validate()?;
    drive_0.validate()?;
    source.validate()?;
    let k = source.k();
    if drive_i.k() != k || drive_0.k() != k {
        return Err(Error::Dimension(format!(
            "motion params disagree on K: source {k}, drive_i {}, drive_0 {}",
            drive_i.k(),
            drive_0.k()
        )));
    }
    let scale = source.scale * (drive_i.scale / drive_0.scale);
    let rotation = drive_i.rotation * drive_0.rotation.transpose() * source.rotation;
    let deformation = source
        .deformation
        .add(&drive_i.deformation)?
        .sub(&drive_0.deformation)?;
    let translation =
        std::array::from_fn(|j| source.translation[j] + drive_i.translation[j] - drive_0.translation[j]);
    Ok(MotionParams {
        rotation,
        scale,
        deformation,
        translation,
    })
}

pub fn relative_transform(
    drive_i: &MotionParams,
    drive_0: &MotionParams,
    source: &MotionParams,
    canonical_source: &Keypoints,
) -> Result<Keypoints> {
    let rel = relative_params(drive_i, drive_0, source)?;
    transform_keypoints(canonical_source, &rel)
}

/// Keypoint correction applied to the driving keypoints before warping.
pub trait Stitcher: Send + Sync {
    fn offset(&self, source: &Keypoints, driving: &Keypoints) -> Result<Keypoints>;
}

/// Default stitching: no correction.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroStitch;

impl Stitcher for ZeroStitch {
    fn offset(&self, source: &Keypoints, driving: &Keypoints) -> Result<Keypoints> {
        source.check_same_k(driving, "stitching")?;
        Ok(Keypoints::zeros(driving.k()))
    }
}

/// Adds the same offset to every keypoint.
#[derive(Debug, Clone, Copy)]
pub struct ConstantStitch(pub [f64; 3]);

impl Stitcher for ConstantStitch {
    fn offset(&self, source: &Keypoints, driving: &Keypoints) -> Result<Keypoints> {
        source.check_same_k(driving, "stitching")?;
        Ok(Keypoints {
            points: vec![self.0; driving.k()],
        })
    }
}

/// Returns `x'_d = x_d + S(x_s, x_d)`.
pub fn stitch(stitcher: &dyn Stitcher, source: &Keypoints, driving: &Keypoints) -> Result<Keypoints> {
    let offset = stitcher.offset(source, driving)?;
    driving.add(&offset)
}
