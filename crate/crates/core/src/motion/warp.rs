use crate::error::{ensure_finite, Error, Result};
use crate::grid::Grid;

use super::Keypoints;

/// Gaussian RBF bandwidth of the dense warping field, in grid cells.
pub const WARP_BANDWIDTH: f64 = 2.0;

/// Toy source feature volume: `ch` channels of `h x w` grids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    channels: Vec<Grid>,
}

impl FeatureVolume {
    pub fn new(channels: Vec<Grid>) -> Result<Self> {
        let Some(first) = channels.first() else {
            return Err(Error::Dimension("feature volume needs at least one channel".into()));
        };
        let dims = first.dims();
        if dims.0 < 4 || dims.1 < 4 {
            return Err(Error::Dimension(format!(
                "feature volume must be at least 4x4, got {}x{}",
                dims.0, dims.1
            )));
        }
        if channels.iter().any(|c| c.dims() != dims) {
            return Err(Error::Dimension("feature channels differ in size".into()));
        }
        for c in &channels {
            ensure_finite(c.as_slice(), "feature volume")?;
        }
        Ok(Self { channels })
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[Grid] {
        &self.channels
    }

    pub fn channel(&self, idx: usize) -> &Grid {
        &self.channels[idx]
    }
}

/// Drops z and maps x, y from `[-1, 1]` onto `(row, col)` grid coordinates,
/// clamped to the grid.
pub fn project_to_grid(point: &[f64; 3], height: usize, width: usize) -> (f64, f64) {
    let max_r = (height - 1) as f64;
    let max_c = (width - 1) as f64;
    let col = ((point[0] + 1.0) * 0.5 * max_c).clamp(0.0, max_c);
    let row = ((point[1] + 1.0) * 0.5 * max_r).clamp(0.0, max_r);
    (row, col)
}

/// Warps the source feature volume so that content at the source keypoints
/// lands on the (stitched) driving keypoints.
///
/// Per-keypoint displacements are interpolated into a dense field with
/// normalized Gaussian radial basis weights anchored at the driving keypoints;
/// each output cell then samples the source at `cell - displacement` with
/// border-clamped bilinear interpolation.
pub fn warp_features(
    source: &FeatureVolume,
    source_kp: &Keypoints,
    driving_kp: &Keypoints,
) -> Result<FeatureVolume> {
    if source_kp.k() != driving_kp.k() {
        return Err(Error::Dimension(format!(
            "warp keypoint counts differ: {} vs {}",
            source_kp.k(),
            driving_kp.k()
        )));
    }
    let (h, w) = (source.height(), source.width());
    let mut anchors = Vec::with_capacity(driving_kp.k());
    let mut moving = false;
    for (s, d) in source_kp.points.iter().zip(&driving_kp.points) {
        let (sr, sc) = project_to_grid(s, h, w);
        let (dr, dc) = project_to_grid(d, h, w);
        let disp = (dr - sr, dc - sc);
        if !disp.0.is_finite() || !disp.1.is_finite() || !dr.is_finite() || !dc.is_finite() {
            return Err(Error::Numeric("non-finite keypoint displacement".into()));
        }
        moving |= disp.0 != 0.0 || disp.1 != 0.0;
        anchors.push((dr, dc, disp.0, disp.1));
    }
    if !moving {
        return Ok(source.clone());
    }

    let inv_two_sigma_sq = 1.0 / (2.0 * WARP_BANDWIDTH * WARP_BANDWIDTH);
    let mut field = Vec::with_capacity(h * w);
    let mut sq = vec![0.0; anchors.len()];
    for r in 0..h {
        for c in 0..w {
            let (rf, cf) = (r as f64, c as f64);
            let mut nearest = f64::INFINITY;
            for (d2, &(ar, ac, _, _)) in sq.iter_mut().zip(&anchors) {
                *d2 = (rf - ar).powi(2) + (cf - ac).powi(2);
                nearest = nearest.min(*d2);
            }
            // Shifting by the nearest distance keeps at least one weight at 1.
            let (mut wsum, mut dr, mut dc) = (0.0, 0.0, 0.0);
            for (d2, &(_, _, disp_r, disp_c)) in sq.iter().zip(&anchors) {
                let wk = (-(d2 - nearest) * inv_two_sigma_sq).exp();
                wsum += wk;
                dr += wk * disp_r;
                dc += wk * disp_c;
            }
            field.push((rf - dr / wsum, cf - dc / wsum));
        }
    }

    let channels = source
        .channels
        .iter()
        .map(|g| {
            let mut out = Grid::zeros(h, w);
            for (i, &(sr, sc)) in field.iter().enumerate() {
                out.as_mut_slice()[i] = g.sample_bilinear(sr, sc);
            }
            out
        })
        .collect();
    Ok(FeatureVolume { channels })
}

/// Toy analog of the motion-transferred humanoid image.
#[derive(Debug, Clone, PartialEq)]
pub struct IntermediateRepr {
    pub grid: Grid,
    pub frame_seq: u64,
}

/// Channel mean per cell, clamped to `[0, 1]`.
pub fn generate_intermediate(warped: &FeatureVolume, frame_seq: u64) -> IntermediateRepr {
    let (h, w) = (warped.height(), warped.width());
    let n = warped.channel_count() as f64;
    let mut grid = Grid::zeros(h, w);
    for ch in &warped.channels {
        for (o, v) in grid.as_mut_slice().iter_mut().zip(ch.as_slice()) {
            *o += v;
        }
    }
    for v in grid.as_mut_slice() {
        *v = (*v / n).clamp(0.0, 1.0);
    }
    IntermediateRepr { grid, frame_seq }
}
