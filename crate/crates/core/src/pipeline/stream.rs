use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::frame::{prepare_frame, wall_micros, Frame, PreparedFrame};
use super::io::{ControlSink, FrameSource};
use super::queue::{QueueStats, StageQueue, DEFAULT_QUEUE_CAPACITY};
use super::session::{FrameProcessor, SessionState};
use crate::control::ControlVector;
use crate::error::{Error, Result};
use crate::latency::{summarize_by_stage, LatencyRecord, LatencySummary, LoadTag, Stage};
use crate::wire::{encode_control, ControlMessage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub fps: f64,
    pub queue_capacity: usize,
    /// Side of the square preprocessed frame.
    pub preprocess_size: usize,
    /// Side of the intermediate image fed to the regressor.
    pub model_input: usize,
    /// Artificial delay added to every control generation, in milliseconds.
    pub control_delay_ms: f64,
    /// Re-anchor motion on the frame with this sequence number.
    pub rebase_at: Option<u64>,
    pub load_tag: LoadTag,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fps: 30.0,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            preprocess_size: 48,
            model_input: 24,
            control_delay_ms: 0.0,
            rebase_at: None,
            load_tag: LoadTag::Idle,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        if self.queue_capacity == 0 {
            return Err(Error::Config("queue capacity must be positive".into()));
        }
        if self.preprocess_size < 16 || self.model_input < 4 {
            return Err(Error::Config(
                "preprocess size must be >= 16 and model input >= 4".into(),
            ));
        }
        if !(self.control_delay_ms >= 0.0 && self.control_delay_ms.is_finite()) {
            return Err(Error::Config("control delay must be >= 0".into()));
        }
        Ok(())
    }
}

/// Queue statistics keyed by the stage each queue feeds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueReport {
    pub preprocess: QueueStats,
    pub control_gen: QueueStats,
    pub transmit: QueueStats,
}

impl QueueReport {
    pub fn total_dropped(&self) -> u64 {
        self.preprocess.dropped + self.control_gen.dropped + self.transmit.dropped
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub frames_ingested: u64,
    pub frames_preprocessed: u64,
    pub controls_generated: u64,
    pub controls_sent: u64,
    pub send_failures: u64,
    pub skipped_frames: u64,
    /// First few per-frame errors, for diagnosis.
    pub diagnostics: Vec<String>,
    pub queues: QueueReport,
    pub summaries: BTreeMap<Stage, LatencySummary>,
    /// Sequence numbers in the order they reached the sink.
    pub sent_seqs: Vec<u64>,
    /// Seconds from session start at which each control was generated.
    pub generation_times: Vec<f64>,
    pub elapsed_s: f64,
    pub source_compute_count: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub records: Vec<LatencyRecord>,
}

impl SessionReport {
    pub fn records_for(&self, stage: Stage) -> impl Iterator<Item = &LatencyRecord> {
        self.records.iter().filter(move |r| r.stage == stage)
    }

    /// Controls generated inside `[from, to)` seconds of the session.
    pub fn generated_between(&self, from: f64, to: f64) -> usize {
        self.generation_times.iter().filter(|&&t| t >= from && t < to).count()
    }
}

const MAX_DIAGNOSTICS: usize = 16;

struct Timed<T> {
    item: T,
    ingested: Instant,
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn push_record(out: &mut Vec<LatencyRecord>, seq: u64, stage: Stage, d: Duration, tag: LoadTag) {
    if let Ok(r) = LatencyRecord::new(seq, stage, secs(d), tag) {
        out.push(r);
    }
}

fn note(diag: &mut Vec<String>, skipped: &mut u64, msg: String) {
    *skipped += 1;
    if diag.len() < MAX_DIAGNOSTICS {
        diag.push(msg);
    }
}

/// Runs ingest, preprocess, control generation and transmit as concurrent
/// stages linked by drop-oldest queues, until the source is exhausted.
pub fn run_stream(
    source: &mut dyn FrameSource,
    sink: &mut dyn ControlSink,
    processor: &FrameProcessor,
    state: &mut SessionState,
    cfg: &PipelineConfig,
) -> Result<SessionReport> {
    cfg.validate()?;
    if state.cache().is_none() {
        return Err(Error::SessionState(
            "precompute the source before streaming".into(),
        ));
    }
    let to_pre: StageQueue<Timed<Frame>> = StageQueue::new(cfg.queue_capacity);
    let to_gen: StageQueue<Timed<PreparedFrame>> = StageQueue::new(cfg.queue_capacity);
    let to_tx: StageQueue<Timed<ControlVector>> = StageQueue::new(cfg.queue_capacity);
    let tag = cfg.load_tag;
    let dims = (cfg.preprocess_size, cfg.preprocess_size);
    let delay = Duration::from_secs_f64(cfg.control_delay_ms / 1000.0);
    let start = Instant::now();

    let (ingest, pre, gen, tx) = std::thread::scope(|s| {
        let ingest = s.spawn(|| {
            let (mut count, mut skipped, mut diag) = (0u64, 0u64, Vec::new());
            while let Some(next) = source.next_frame() {
                match next {
                    Ok(frame) => {
                        count += 1;
                        to_pre.push(Timed {
                            item: frame,
                            ingested: Instant::now(),
                        });
                    }
                    Err(e) => note(&mut diag, &mut skipped, format!("ingest: {e}")),
                }
            }
            to_pre.close();
            (count, skipped, diag)
        });

        let pre = s.spawn(|| {
            let (mut count, mut skipped, mut diag, mut recs) = (0u64, 0u64, Vec::new(), Vec::new());
            while let Some(t) = to_pre.pop() {
                let t0 = Instant::now();
                match prepare_frame(&t.item, dims) {
                    Ok(p) => {
                        push_record(&mut recs, p.seq, Stage::Preprocess, t0.elapsed(), tag);
                        count += 1;
                        to_gen.push(Timed {
                            item: p,
                            ingested: t.ingested,
                        });
                    }
                    Err(e) => note(&mut diag, &mut skipped, format!("frame {}: {e}", t.item.seq)),
                }
            }
            to_gen.close();
            (count, skipped, diag, recs)
        });

        let gen = s.spawn(|| {
            let (mut count, mut skipped, mut diag, mut recs) = (0u64, 0u64, Vec::new(), Vec::new());
            let mut times = Vec::new();
            while let Some(t) = to_gen.pop() {
                let t0 = Instant::now();
                if cfg.rebase_at == Some(t.item.seq) {
                    state.request_rebase();
                }
                let out = processor.process_frame(&t.item, state);
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                }
                match out {
                    Ok(cv) => {
                        push_record(&mut recs, cv.seq, Stage::ControlGen, t0.elapsed(), tag);
                        times.push(secs(start.elapsed()));
                        count += 1;
                        to_tx.push(Timed {
                            item: cv,
                            ingested: t.ingested,
                        });
                    }
                    Err(e) => note(&mut diag, &mut skipped, format!("frame {}: {e}", t.item.seq)),
                }
            }
            to_tx.close();
            (count, skipped, diag, recs, times)
        });

        let tx = s.spawn(|| {
            let (mut sent, mut failures, mut recs, mut seqs) = (0u64, 0u64, Vec::new(), Vec::new());
            let mut diag = Vec::new();
            let mut skipped = 0u64;
            while let Some(t) = to_tx.pop() {
                let t0 = Instant::now();
                let mut cv = t.item;
                cv.send_ts = wall_micros().max(cv.capture_ts);
                let msg = match ControlMessage::try_from(&cv) {
                    Ok(m) => m,
                    Err(e) => {
                        note(&mut diag, &mut skipped, format!("frame {}: {e}", cv.seq));
                        continue;
                    }
                };
                let res = encode_control(&msg)
                    .map_err(Error::from)
                    .and_then(|bytes| sink.send(&msg, &bytes));
                let done = Instant::now();
                match res {
                    Ok(()) => {
                        sent += 1;
                        seqs.push(cv.seq);
                        push_record(&mut recs, cv.seq, Stage::Transmit, done - t0, tag);
                        push_record(&mut recs, cv.seq, Stage::Total, done - t.ingested, tag);
                    }
                    Err(e) => {
                        failures += 1;
                        if diag.len() < MAX_DIAGNOSTICS {
                            diag.push(format!("send {}: {e}", cv.seq));
                        }
                    }
                }
            }
            if let Err(e) = sink.flush() {
                diag.push(format!("flush: {e}"));
            }
            (sent, failures, skipped, diag, recs, seqs)
        });

        (
            ingest.join().expect("ingest stage panicked"),
            pre.join().expect("preprocess stage panicked"),
            gen.join().expect("control stage panicked"),
            tx.join().expect("transmit stage panicked"),
        )
    });

    let mut records = pre.3;
    records.extend(gen.3);
    records.extend(tx.4);
    let mut diagnostics = ingest.2;
    diagnostics.extend(pre.2);
    diagnostics.extend(gen.2);
    diagnostics.extend(tx.3);
    Ok(SessionReport {
        frames_ingested: ingest.0,
        frames_preprocessed: pre.0,
        controls_generated: gen.0,
        controls_sent: tx.0,
        send_failures: tx.1,
        skipped_frames: ingest.1 + pre.1 + gen.1 + tx.2,
        diagnostics,
        queues: QueueReport {
            preprocess: to_pre.stats(),
            control_gen: to_gen.stats(),
            transmit: to_tx.stats(),
        },
        summaries: summarize_by_stage(&records),
        sent_seqs: tx.5,
        generation_times: gen.4,
        elapsed_s: secs(start.elapsed()),
        source_compute_count: state.cache().map_or(0, |c| c.compute_count()),
        records,
    })
}

/// Processes frames one after another on the calling thread.
pub fn process_sequence(
    frames: &[Frame],
    processor: &FrameProcessor,
    state: &mut SessionState,
    preprocess_size: usize,
) -> Vec<Result<ControlVector>> {
    frames
        .iter()
        .map(|f| {
            let p = prepare_frame(f, (preprocess_size, preprocess_size))?;
            processor.process_frame(&p, state)
        })
        .collect()
}
