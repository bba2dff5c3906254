use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::frame::{wall_micros, Frame, FRAME_HEIGHT, FRAME_WIDTH};
use crate::error::{Error, Result};
use crate::synth::{render_frame, ExpressionParams, SynthWorld, EXPRESSION_DIMS, MAX_ANGLE};
use crate::wire::{ControlMessage, FrameMessage, StreamDecoder};

pub const DEFAULT_FRAME_PORT: u16 = 7588;

/// Producer of driving frames; `None` ends the session.
pub trait FrameSource: Send {
    fn next_frame(&mut self) -> Option<Result<Frame>>;
}

/// Consumer of encoded control messages.
pub trait ControlSink: Send {
    fn send(&mut self, msg: &ControlMessage, bytes: &[u8]) -> Result<()>;

    fn flush(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Sleeps until frame `seq` is due at `fps`, measured from the first call.
#[derive(Debug, Clone, Default)]
struct Pacer {
    start: Option<Instant>,
}

impl Pacer {
    fn wait(&mut self, seq: u64, fps: f64) {
        let start = *self.start.get_or_insert_with(Instant::now);
        let due = start + Duration::from_secs_f64(seq as f64 / fps);
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
    }
}

/// Paced camera stand-in rendering a smooth expression trajectory.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    world: SynthWorld,
    fps: f64,
    frames: u64,
    face_res: usize,
    sidecar: bool,
    freqs: [f64; EXPRESSION_DIMS + 3],
    phases: [f64; EXPRESSION_DIMS + 3],
    seq: u64,
    pacer: Pacer,
}

impl SyntheticSource {
    pub fn new(world: SynthWorld, fps: f64, frames: u64, face_res: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            world,
            fps,
            frames,
            face_res,
            sidecar: false,
            freqs: std::array::from_fn(|_| rng.random_range(0.05..0.4)),
            phases: std::array::from_fn(|_| rng.random_range(0.0..TAU)),
            seq: 0,
            pacer: Pacer::default(),
        }
    }

    /// Attach the true motion to every frame.
    pub fn with_sidecar(mut self) -> Self {
        self.sidecar = true;
        self
    }

    pub fn expression_at(&self, seq: u64) -> ExpressionParams {
        let t = seq as f64 / self.fps;
        let wave = |i: usize| (TAU * self.freqs[i] * t + self.phases[i]).sin();
        let mut expr = ExpressionParams::neutral();
        for (i, e) in expr.e.iter_mut().enumerate() {
            *e = 0.8 * wave(i);
        }
        expr.yaw = 0.4 * MAX_ANGLE * wave(EXPRESSION_DIMS);
        expr.pitch = 0.4 * MAX_ANGLE * wave(EXPRESSION_DIMS + 1);
        expr.roll = 0.4 * MAX_ANGLE * wave(EXPRESSION_DIMS + 2);
        expr.seed = seq;
        expr
    }

    /// The frame for `seq` without pacing or a wall-clock timestamp.
    pub fn render(&self, seq: u64) -> Result<Frame> {
        let expr = self.expression_at(seq);
        let motion = self.world.synth_motion(&expr)?;
        let kp = crate::motion::transform_keypoints(&self.world.canonical, &motion)?;
        let img = render_frame(&kp, FRAME_WIDTH, FRAME_HEIGHT, self.face_res);
        let frame = Frame::from_grid(seq, 0, img);
        Ok(if self.sidecar { frame.with_sidecar(motion) } else { frame })
    }
}

impl FrameSource for SyntheticSource {
    fn next_frame(&mut self) -> Option<Result<Frame>> {
        if self.seq >= self.frames {
            return None;
        }
        self.pacer.wait(self.seq, self.fps);
        let frame = self.render(self.seq).map(|mut f| {
            f.capture_ts = wall_micros();
            f
        });
        self.seq += 1;
        Some(frame)
    }
}

/// Pre-built frames, optionally paced.
#[derive(Debug, Clone, Default)]
pub struct VecSource {
    frames: VecDeque<Frame>,
    fps: Option<f64>,
    pacer: Pacer,
    emitted: u64,
}

impl VecSource {
    pub fn new(frames: Vec<Frame>, fps: Option<f64>) -> Self {
        Self {
            frames: frames.into(),
            fps,
            pacer: Pacer::default(),
            emitted: 0,
        }
    }
}

impl FrameSource for VecSource {
    fn next_frame(&mut self) -> Option<Result<Frame>> {
        let frame = self.frames.pop_front()?;
        if let Some(fps) = self.fps {
            self.pacer.wait(self.emitted, fps);
        }
        self.emitted += 1;
        Some(Ok(frame))
    }
}

/// Frames decoded from a byte stream (file or socket).
pub struct ReaderSource<R> {
    reader: R,
    decoder: StreamDecoder<FrameMessage>,
    fps: Option<f64>,
    pacer: Pacer,
    emitted: u64,
    eof: bool,
}

impl<R: Read + Send> ReaderSource<R> {
    pub fn new(reader: R, fps: Option<f64>) -> Self {
        Self {
            reader,
            decoder: StreamDecoder::new(),
            fps,
            pacer: Pacer::default(),
            emitted: 0,
            eof: false,
        }
    }
}

impl ReaderSource<std::fs::File> {
    pub fn open(path: &std::path::Path, fps: Option<f64>) -> Result<Self> {
        Ok(Self::new(std::fs::File::open(path)?, fps))
    }
}

impl ReaderSource<TcpStream> {
    /// Waits for one client on `addr` and streams its frames.
    pub fn accept(addr: impl ToSocketAddrs) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let (stream, _) = listener.accept()?;
        Ok(Self::new(stream, None))
    }
}

impl<R: Read + Send> FrameSource for ReaderSource<R> {
    fn next_frame(&mut self) -> Option<Result<Frame>> {
        let mut buf = [0u8; 64 * 1024];
        loop {
            match self.decoder.next_message() {
                Some(Ok(msg)) => {
                    if let Some(fps) = self.fps {
                        self.pacer.wait(self.emitted, fps);
                    }
                    self.emitted += 1;
                    return Some(Frame::try_from(msg));
                }
                Some(Err(e)) => return Some(Err(e.into())),
                None if self.eof => return None,
                None => match self.reader.read(&mut buf) {
                    Ok(0) => self.eof = true,
                    Ok(n) => self.decoder.push(&buf[..n]),
                    Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                    Err(e) => {
                        self.eof = true;
                        return Some(Err(e.into()));
                    }
                },
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NullSink;

impl ControlSink for NullSink {
    fn send(&mut self, _: &ControlMessage, _: &[u8]) -> Result<()> {
        Ok(())
    }
}

/// Appends encoded messages to any writer, e.g. a file.
pub struct WriterSink<W>(pub W);

impl<W: Write + Send> ControlSink for WriterSink<W> {
    fn send(&mut self, _: &ControlMessage, bytes: &[u8]) -> Result<()> {
        self.0.write_all(bytes)?;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.0.flush()?;
        Ok(())
    }
}

/// TCP client that connects lazily and reconnects after a failure.
pub struct SocketSink {
    addr: String,
    stream: Option<TcpStream>,
}

impl SocketSink {
    pub fn new(addr: impl Into<String>) -> Self {
        Self {
            addr: addr.into(),
            stream: None,
        }
    }
}

impl ControlSink for SocketSink {
    fn send(&mut self, _: &ControlMessage, bytes: &[u8]) -> Result<()> {
        if self.stream.is_none() {
            let s = TcpStream::connect(&self.addr)
                .map_err(|e| Error::Io(format!("connect {}: {e}", self.addr)))?;
            s.set_nodelay(true)?;
            self.stream = Some(s);
        }
        let res = self.stream.as_mut().map(|s| s.write_all(bytes));
        if let Some(Err(e)) = res {
            self.stream = None;
            return Err(e.into());
        }
        Ok(())
    }
}

/// Keeps every message in memory.
#[derive(Debug, Clone, Default)]
pub struct CollectSink(pub Arc<Mutex<Vec<ControlMessage>>>);

impl ControlSink for CollectSink {
    fn send(&mut self, msg: &ControlMessage, _: &[u8]) -> Result<()> {
        self.0.lock().unwrap().push(msg.clone());
        Ok(())
    }
}

/// Wraps a sink and blocks once for `stall` on message number `after`.
pub struct StallSink<S> {
    inner: S,
    after: u64,
    stall: Duration,
    sent: u64,
}

impl<S> StallSink<S> {
    pub fn new(inner: S, after: u64, stall: Duration) -> Self {
        Self {
            inner,
            after,
            stall,
            sent: 0,
        }
    }
}

impl<S: ControlSink> ControlSink for StallSink<S> {
    fn send(&mut self, msg: &ControlMessage, bytes: &[u8]) -> Result<()> {
        if self.sent == self.after {
            std::thread::sleep(self.stall);
        }
        self.sent += 1;
        self.inner.send(msg, bytes)
    }

    fn flush(&mut self) -> Result<()> {
        self.inner.flush()
    }
}
