use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{LatencySummary, LoadTag, Stage};
use crate::error::{Error, Result};
use crate::pipeline::{
    run_stream, toy_processor, toy_session, NullSink, PipelineConfig, SyntheticSource,
};
use crate::synth::SynthWorld;

const DUTY_PERIOD: Duration = Duration::from_millis(10);

/// Background CPU load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoadLevel {
    Idle,
    /// Every core busy for this percentage of each 10 ms period.
    Percent(u32),
    /// This many always-busy workers.
    Workers(usize),
}

impl LoadLevel {
    pub fn tag(self) -> LoadTag {
        match self {
            LoadLevel::Idle => LoadTag::Idle,
            LoadLevel::Percent(50) => LoadTag::Load50,
            LoadLevel::Percent(90) => LoadTag::Load90,
            _ => LoadTag::Custom,
        }
    }

    pub fn label(self) -> String {
        match self {
            LoadLevel::Idle => "idle".into(),
            LoadLevel::Percent(p) => format!("load{p}"),
            LoadLevel::Workers(n) => format!("{n}-workers"),
        }
    }
}

impl FromStr for LoadLevel {
    type Err = Error;

    /// `idle`, a percentage such as `50`, or `N-workers`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("load must be idle, 1..100 or N-workers, got {s:?}"));
        if s == "idle" {
            return Ok(LoadLevel::Idle);
        }
        if let Some(n) = s.strip_suffix("-workers") {
            return n.parse().map(LoadLevel::Workers).map_err(|_| bad());
        }
        match s.trim_end_matches('%').parse::<u32>() {
            Ok(p) if (1..=100).contains(&p) => Ok(LoadLevel::Percent(p)),
            _ => Err(bad()),
        }
    }
}

/// Busy-spin workers that run until dropped.
pub struct LoadGenerator {
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

fn spin_until(deadline: Instant, stop: &AtomicBool) {
    let mut x = 0u64;
    while Instant::now() < deadline && !stop.load(Ordering::Relaxed) {
        for _ in 0..256 {
            x = std::hint::black_box(x.wrapping_mul(6364136223846793005).wrapping_add(1));
        }
    }
}

impl LoadGenerator {
    pub fn start(level: LoadLevel) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        let (count, duty) = match level {
            LoadLevel::Idle => (0, 0.0),
            LoadLevel::Percent(p) => (cores, p.min(100) as f64 / 100.0),
            LoadLevel::Workers(n) => (n, 1.0),
        };
        let workers = (0..count)
            .map(|_| {
                let stop = Arc::clone(&stop);
                std::thread::spawn(move || {
                    let busy = DUTY_PERIOD.mul_f64(duty);
                    while !stop.load(Ordering::Relaxed) {
                        let t0 = Instant::now();
                        spin_until(t0 + busy, &stop);
                        let rest = DUTY_PERIOD.saturating_sub(t0.elapsed());
                        if !rest.is_zero() {
                            std::thread::sleep(rest);
                        }
                    }
                })
            })
            .collect();
        Self { stop, workers }
    }

    pub fn worker_count(&self) -> usize {
        self.workers.len()
    }
}

impl Drop for LoadGenerator {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadRunSummary {
    pub load: String,
    pub load_tag: LoadTag,
    pub repeat: usize,
    /// End-to-end latency.
    pub total: Option<LatencySummary>,
    pub stages: BTreeMap<Stage, LatencySummary>,
    pub frames: u64,
    pub dropped: u64,
    /// Set when frames failed mid-run; statistics cover the survivors.
    pub partial: bool,
    /// Raw durations per stage, for pooling across repeats.
    #[serde(skip)]
    pub samples: BTreeMap<Stage, Vec<f64>>,
}

/// Runs the toy pipeline `repeats` times for `duration_s` each under `level`.
pub fn run_load_experiment(
    cfg: &PipelineConfig,
    level: LoadLevel,
    duration_s: f64,
    repeats: usize,
) -> Result<Vec<LoadRunSummary>> {
    if !(duration_s > 0.0) || repeats == 0 {
        return Err(Error::Config("duration must be > 0 and repeats >= 1".into()));
    }
    let cfg = PipelineConfig {
        load_tag: level.tag(),
        ..cfg.clone()
    };
    cfg.validate()?;
    let world = SynthWorld::published();
    let processor = toy_processor(&world, &cfg, None)?;
    let frames = (duration_s * cfg.fps).round() as u64;
    let mut out = Vec::with_capacity(repeats);
    for repeat in 0..repeats {
        let mut state = toy_session(&world, &cfg)?;
        let mut source = SyntheticSource::new(world.clone(), cfg.fps, frames, cfg.preprocess_size, cfg.seed);
        let load = LoadGenerator::start(level);
        let report = run_stream(&mut source, &mut NullSink, &processor, &mut state, &cfg);
        drop(load);
        let summary = match report {
            Ok(r) => LoadRunSummary {
                load: level.label(),
                load_tag: level.tag(),
                repeat,
                total: r.summaries.get(&Stage::Total).copied(),
                stages: r.summaries.clone(),
                frames: r.frames_ingested,
                dropped: r.queues.total_dropped(),
                partial: r.skipped_frames > 0 || r.send_failures > 0,
                samples: Stage::ALL
                    .into_iter()
                    .map(|st| (st, r.records_for(st).map(|x| x.duration).collect()))
                    .collect(),
            },
            Err(_) => LoadRunSummary {
                load: level.label(),
                load_tag: level.tag(),
                repeat,
                total: None,
                stages: BTreeMap::new(),
                frames: 0,
                dropped: 0,
                partial: true,
                samples: BTreeMap::new(),
            },
        };
        out.push(summary);
    }
    Ok(out)
}
