//! Little-endian binary framing for frames in and control values out.
//!
//! Frame: `"VFF1" | len u32 | seq u64 | capture_ts u64 | width u16 | height u16 | format u8 | payload`.
//! Control: `"VFC1" | seq u64 | capture_ts u64 | send_ts u64 | count u16 | 30 x f32`.

use std::marker::PhantomData;

use thiserror::Error;

use crate::control::{ControlVector, NUM_CONTROLS};
use crate::error::Error;
use crate::grid::Grid;

pub const FRAME_MAGIC: [u8; 4] = *b"VFF1";
pub const CONTROL_MAGIC: [u8; 4] = *b"VFC1";
pub const FRAME_HEADER_LEN: usize = 29;
pub const CONTROL_MESSAGE_LEN: usize = 4 + 8 + 8 + 8 + 2 + 4 * NUM_CONTROLS;
/// Largest payload a frame may declare.
pub const MAX_PAYLOAD: usize = 16 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    Protocol([u8; 4]),
    #[error("incomplete message: need {needed} bytes, have {have}")]
    Incomplete { needed: usize, have: usize },
    #[error("corrupt message: {0}")]
    Corrupt(String),
    #[error("declared payload of {0} bytes exceeds cap")]
    TooLarge(usize),
    #[error("invalid message: {0}")]
    Invalid(String),
}

impl From<WireError> for Error {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Invalid(m) => Error::Validation(m),
            other => Error::FrameDecode(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameFormat {
    /// Row-major float32 intensities.
    Grid = 0,
    /// Opaque encoded image bytes.
    Encoded = 1,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMessage {
    pub seq: u64,
    pub capture_ts: u64,
    pub width: u16,
    pub height: u16,
    pub format: FrameFormat,
    pub payload: Vec<u8>,
}

impl FrameMessage {
    pub fn from_grid(seq: u64, capture_ts: u64, grid: &Grid) -> Result<Self, WireError> {
        let (h, w) = grid.dims();
        let (Ok(width), Ok(height)) = (u16::try_from(w), u16::try_from(h)) else {
            return Err(WireError::Invalid(format!("{w}x{h} frame exceeds u16 dims")));
        };
        let payload: Vec<u8> = grid
            .as_slice()
            .iter()
            .flat_map(|v| (*v as f32).to_le_bytes())
            .collect();
        if payload.len() > MAX_PAYLOAD {
            return Err(WireError::TooLarge(payload.len()));
        }
        Ok(Self {
            seq,
            capture_ts,
            width,
            height,
            format: FrameFormat::Grid,
            payload,
        })
    }

    /// Decodes a float32 payload; opaque or non-finite frames are rejected.
    pub fn to_grid(&self) -> Result<Grid, WireError> {
        if self.format != FrameFormat::Grid {
            return Err(WireError::Invalid("opaque frame has no grid payload".into()));
        }
        self.check_size()?;
        let data: Vec<f64> = self
            .payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(WireError::Invalid("frame holds non-finite pixels".into()));
        }
        Grid::from_vec(self.height as usize, self.width as usize, data)
            .map_err(|e| WireError::Corrupt(e.to_string()))
    }

    fn check_size(&self) -> Result<(), WireError> {
        if self.format == FrameFormat::Grid {
            let expected = 4 * self.width as usize * self.height as usize;
            if self.payload.len() != expected {
                return Err(WireError::Corrupt(format!(
                    "{}x{} grid needs {expected} payload bytes, got {}",
                    self.width,
                    self.height,
                    self.payload.len()
                )));
            }
        }
        Ok(())
    }
}

pub fn encode_frame(msg: &FrameMessage) -> Result<Vec<u8>, WireError> {
    if msg.payload.len() > MAX_PAYLOAD {
        return Err(WireError::TooLarge(msg.payload.len()));
    }
    msg.check_size()?;
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + msg.payload.len());
    out.extend_from_slice(&FRAME_MAGIC);
    out.extend_from_slice(&(msg.payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&msg.seq.to_le_bytes());
    out.extend_from_slice(&msg.capture_ts.to_le_bytes());
    out.extend_from_slice(&msg.width.to_le_bytes());
    out.extend_from_slice(&msg.height.to_le_bytes());
    out.push(msg.format as u8);
    out.extend_from_slice(&msg.payload);
    Ok(out)
}

fn magic_of(bytes: &[u8]) -> [u8; 4] {
    [bytes[0], bytes[1], bytes[2], bytes[3]]
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn need(bytes: &[u8], needed: usize) -> Result<(), WireError> {
    if bytes.len() < needed {
        Err(WireError::Incomplete {
            needed,
            have: bytes.len(),
        })
    } else {
        Ok(())
    }
}

/// Decodes one frame from the front of `bytes`, returning it with the
/// number of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(FrameMessage, usize), WireError> {
    need(bytes, 4)?;
    if magic_of(bytes) != FRAME_MAGIC {
        return Err(WireError::Protocol(magic_of(bytes)));
    }
    need(bytes, FRAME_HEADER_LEN)?;
    let len = u32_at(bytes, 4) as usize;
    if len > MAX_PAYLOAD {
        return Err(WireError::TooLarge(len));
    }
    let format = match bytes[28] {
        0 => FrameFormat::Grid,
        1 => FrameFormat::Encoded,
        f => return Err(WireError::Corrupt(format!("unknown format {f}"))),
    };
    let width = u16_at(bytes, 24);
    let height = u16_at(bytes, 26);
    if format == FrameFormat::Grid && len != 4 * width as usize * height as usize {
        return Err(WireError::Corrupt(format!(
            "{width}x{height} grid declares {len} payload bytes"
        )));
    }
    need(bytes, FRAME_HEADER_LEN + len)?;
    let msg = FrameMessage {
        seq: u64_at(bytes, 8),
        capture_ts: u64_at(bytes, 16),
        width,
        height,
        format,
        payload: bytes[FRAME_HEADER_LEN..FRAME_HEADER_LEN + len].to_vec(),
    };
    Ok((msg, FRAME_HEADER_LEN + len))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlMessage {
    pub seq: u64,
    pub capture_ts: u64,
    pub send_ts: u64,
    pub values: [f32; NUM_CONTROLS],
}

impl ControlMessage {
    pub fn validate(&self) -> Result<(), WireError> {
        if let Some(v) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(WireError::Invalid(format!("control value {v} outside [0, 1]")));
        }
        if self.send_ts < self.capture_ts {
            return Err(WireError::Invalid(format!(
                "send_ts {} precedes capture_ts {}",
                self.send_ts, self.capture_ts
            )));
        }
        Ok(())
    }
}

impl TryFrom<&ControlVector> for ControlMessage {
    type Error = Error;

    fn try_from(cv: &ControlVector) -> Result<Self, Error> {
        cv.validate()?;
        let mut values = [0f32; NUM_CONTROLS];
        for (dst, src) in values.iter_mut().zip(&cv.values) {
            *dst = *src as f32;
        }
        let msg = Self {
            seq: cv.seq,
            capture_ts: cv.capture_ts,
            send_ts: cv.send_ts,
            values,
        };
        msg.validate()?;
        Ok(msg)
    }
}

impl From<&ControlMessage> for ControlVector {
    fn from(m: &ControlMessage) -> Self {
        ControlVector {
            values: m.values.iter().map(|&v| v as f64).collect(),
            seq: m.seq,
            capture_ts: m.capture_ts,
            send_ts: m.send_ts,
        }
    }
}

pub fn encode_control(msg: &ControlMessage) -> Result<Vec<u8>, WireError> {
    msg.validate()?;
    let mut out = Vec::with_capacity(CONTROL_MESSAGE_LEN);
    out.extend_from_slice(&CONTROL_MAGIC);
    out.extend_from_slice(&msg.seq.to_le_bytes());
    out.extend_from_slice(&msg.capture_ts.to_le_bytes());
    out.extend_from_slice(&msg.send_ts.to_le_bytes());
    out.extend_from_slice(&(NUM_CONTROLS as u16).to_le_bytes());
    for v in msg.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_control(bytes: &[u8]) -> Result<(ControlMessage, usize), WireError> {
    need(bytes, 4)?;
    if magic_of(bytes) != CONTROL_MAGIC {
        return Err(WireError::Protocol(magic_of(bytes)));
    }
    need(bytes, CONTROL_MESSAGE_LEN)?;
    let count = u16_at(bytes, 28);
    if count as usize != NUM_CONTROLS {
        return Err(WireError::Invalid(format!(
            "control count {count}, expected {NUM_CONTROLS}"
        )));
    }
    let mut values = [0f32; NUM_CONTROLS];
    for (i, v) in values.iter_mut().enumerate() {
        let at = 30 + 4 * i;
        *v = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    }
    let msg = ControlMessage {
        seq: u64_at(bytes, 4),
        capture_ts: u64_at(bytes, 12),
        send_ts: u64_at(bytes, 20),
        values,
    };
    msg.validate()?;
    Ok((msg, CONTROL_MESSAGE_LEN))
}

/// A message type that can be pulled out of a byte stream.
pub trait WireMessage: Sized {
    const MAGIC: [u8; 4];
    fn decode(bytes: &[u8]) -> Result<(Self, usize), WireError>;
}

impl WireMessage for FrameMessage {
    const MAGIC: [u8; 4] = FRAME_MAGIC;
    fn decode(bytes: &[u8]) -> Result<(Self, usize), WireError> {
        decode_frame(bytes)
    }
}

impl WireMessage for ControlMessage {
    const MAGIC: [u8; 4] = CONTROL_MAGIC;
    fn decode(bytes: &[u8]) -> Result<(Self, usize), WireError> {
        decode_control(bytes)
    }
}

/// Incremental decoder that resynchronizes on the next magic after garbage
/// or a rejected message.
#[derive(Debug)]
pub struct StreamDecoder<M> {
    buf: Vec<u8>,
    skipped: usize,
    _msg: PhantomData<M>,
}

impl<M> Default for StreamDecoder<M> {
    fn default() -> Self {
        Self {
            buf: Vec::new(),
            skipped: 0,
            _msg: PhantomData,
        }
    }
}

impl<M: WireMessage> StreamDecoder<M> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes discarded while hunting for a magic.
    pub fn skipped_bytes(&self) -> usize {
        self.skipped
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next decoded message, `Some(Err)` for a rejected one (its first byte is
    /// dropped so scanning continues), or `None` when more input is needed.
    pub fn next_message(&mut self) -> Option<Result<M, WireError>> {
        let start = self
            .buf
            .windows(4)
            .position(|w| w == M::MAGIC)
            .unwrap_or(self.buf.len().saturating_sub(3));
        if start > 0 {
            self.buf.drain(..start);
            self.skipped += start;
        }
        if self.buf.len() < 4 {
            return None;
        }
        match M::decode(&self.buf) {
            Ok((msg, used)) => {
                self.buf.drain(..used);
                Some(Ok(msg))
            }
            Err(WireError::Incomplete { .. }) => None,
            Err(e) => {
                self.buf.drain(..1);
                self.skipped += 1;
                Some(Err(e))
            }
        }
    }
}

impl<M: WireMessage> Iterator for StreamDecoder<M> {
    type Item = Result<M, WireError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_message()
    }
}
