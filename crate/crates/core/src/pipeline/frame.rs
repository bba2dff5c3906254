use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::motion::MotionParams;
use crate::wire::{FrameFormat, FrameMessage};

/// Camera frame size used by the synthetic source.
pub const FRAME_WIDTH: usize = 480;
pub const FRAME_HEIGHT: usize = 360;

#[derive(Debug, Clone, PartialEq)]
pub enum FramePayload {
    Grid(Grid),
    /// Opaque encoded image; needs sidecar motion to be usable.
    Encoded(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub seq: u64,
    /// Microseconds since the Unix epoch.
    pub capture_ts: u64,
    pub width: usize,
    pub height: usize,
    pub payload: FramePayload,
    /// Known motion for replayed streams.
    pub sidecar: Option<MotionParams>,
}

impl Frame {
    pub fn from_grid(seq: u64, capture_ts: u64, grid: Grid) -> Self {
        let (height, width) = grid.dims();
        Self {
            seq,
            capture_ts,
            width,
            height,
            payload: FramePayload::Grid(grid),
            sidecar: None,
        }
    }

    pub fn with_sidecar(mut self, params: MotionParams) -> Self {
        self.sidecar = Some(params);
        self
    }
}

impl TryFrom<FrameMessage> for Frame {
    type Error = Error;

    fn try_from(msg: FrameMessage) -> Result<Self> {
        let payload = match msg.format {
            FrameFormat::Grid => FramePayload::Grid(msg.to_grid()?),
            FrameFormat::Encoded => FramePayload::Encoded(msg.payload),
        };
        Ok(Self {
            seq: msg.seq,
            capture_ts: msg.capture_ts,
            width: msg.width as usize,
            height: msg.height as usize,
            payload,
            sidecar: None,
        })
    }
}

/// Output of the preprocessing stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFrame {
    pub seq: u64,
    pub capture_ts: u64,
    pub image: Option<Grid>,
    pub sidecar: Option<MotionParams>,
}

/// Center-crops to a square, then resizes bilinearly to `target` (rows,
/// cols) with corner-aligned sampling. Values are clamped to `[0, 1]`.
pub fn preprocess(img: &Grid, target: (usize, usize)) -> Result<Grid> {
    let (h, w) = img.dims();
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::Dimension("preprocess target must be non-empty".into()));
    }
    let side = h.min(w);
    let top = ((h - side) / 2) as f64;
    let left = ((w - side) / 2) as f64;
    let step = |n: usize| if n > 1 { (side - 1) as f64 / (n - 1) as f64 } else { 0.0 };
    let (sr, sc) = (step(th), step(tw));
    Ok(Grid::from_fn(th, tw, |r, c| {
        img.sample_bilinear(top + r as f64 * sr, left + c as f64 * sc)
            .clamp(0.0, 1.0)
    }))
}

/// Decodes and preprocesses a frame. Encoded payloads pass through only when
/// sidecar motion makes pixels unnecessary.
pub fn prepare_frame(frame: &Frame, target: (usize, usize)) -> Result<PreparedFrame> {
    let image = match &frame.payload {
        FramePayload::Grid(g) => {
            if g.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::FrameDecode(format!("frame {} has non-finite pixels", frame.seq)));
            }
            Some(preprocess(g, target)?)
        }
        FramePayload::Encoded(_) if frame.sidecar.is_some() => None,
        FramePayload::Encoded(_) => {
            return Err(Error::FrameDecode(format!(
                "frame {} is encoded and no image decoder is configured",
                frame.seq
            )))
        }
    };
    Ok(PreparedFrame {
        seq: frame.seq,
        capture_ts: frame.capture_ts,
        image,
        sidecar: frame.sidecar.clone(),
    })
}

pub fn wall_micros() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_micros() as u64)
}
