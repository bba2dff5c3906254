//! Per-stage latency records, summary statistics, stage budgets and
//! load-condition experiments.

mod load;

pub use load::{run_load_experiment, LoadGenerator, LoadLevel, LoadRunSummary};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Preprocess,
    ControlGen,
    Transmit,
    Total,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Preprocess, Stage::ControlGen, Stage::Transmit, Stage::Total];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::ControlGen => "control_gen",
            Stage::Transmit => "transmit",
            Stage::Total => "total",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadTag {
    Idle,
    Load50,
    Load90,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub frame_seq: u64,
    pub stage: Stage,
    /// Seconds.
    pub duration: f64,
    pub load_tag: LoadTag,
}

impl LatencyRecord {
    pub fn new(frame_seq: u64, stage: Stage, duration: f64, load_tag: LoadTag) -> Result<Self> {
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::Validation(format!("invalid duration {duration}")));
        }
        Ok(Self {
            frame_seq,
            stage,
            duration,
            load_tag,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
    pub count: usize,
}

/// The `ceil(pct / 100 * n)`-th smallest element of `sorted`, 1-based.
pub fn nearest_rank(sorted: &[f64], pct: u32) -> f64 {
    let n = sorted.len();
    let rank = (pct as usize * n).div_ceil(100).max(1);
    sorted[rank.min(n) - 1]
}

pub fn summarize(durations: &[f64]) -> Result<LatencySummary> {
    if durations.is_empty() {
        return Err(Error::Validation("no latency samples".into()));
    }
    if durations.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::Validation("latency samples must be finite and >= 0".into()));
    }
    let mut sorted = durations.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    Ok(LatencySummary {
        mean,
        std: var.sqrt(),
        p95: nearest_rank(&sorted, 95),
        p99: nearest_rank(&sorted, 99),
        max: sorted[sorted.len() - 1],
        count: sorted.len(),
    })
}

/// Summaries per stage; stages without records are absent.
pub fn summarize_by_stage(records: &[LatencyRecord]) -> BTreeMap<Stage, LatencySummary> {
    let mut by: BTreeMap<Stage, Vec<f64>> = BTreeMap::new();
    for r in records {
        by.entry(r.stage).or_default().push(r.duration);
    }
    by.into_iter()
        .filter_map(|(s, d)| summarize(&d).ok().map(|sum| (s, sum)))
        .collect()
}

/// Seconds allowed per stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageBudget {
    pub preprocess: f64,
    pub control_gen: f64,
    pub transmit: f64,
    pub total: f64,
}

impl Default for StageBudget {
    fn default() -> Self {
        Self {
            preprocess: 0.0149,
            control_gen: 0.0350,
            transmit: 0.0001,
            total: 0.0500,
        }
    }
}

impl StageBudget {
    pub fn validate(&self) -> Result<()> {
        let sum = self.preprocess + self.control_gen + self.transmit;
        if (sum - self.total).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "stage budgets sum to {sum}, total is {}",
                self.total
            )));
        }
        Ok(())
    }

    pub fn for_stage(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Preprocess => self.preprocess,
            Stage::ControlGen => self.control_gen,
            Stage::Transmit => self.transmit,
            Stage::Total => self.total,
        }
    }

    /// Every budget multiplied by `factor`, for hardware slower or faster
    /// than the reference machine.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            preprocess: self.preprocess * factor,
            control_gen: self.control_gen * factor,
            transmit: self.transmit * factor,
            total: self.total * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetVerdict {
    pub stage: Stage,
    pub budget: f64,
    pub mean: f64,
    pub p95: f64,
    /// `budget - mean`; negative when over budget.
    pub mean_margin: f64,
    pub p95_margin: f64,
    pub pass: bool,
}

pub fn check_budget(summary: &LatencySummary, budget: &StageBudget, stage: Stage) -> BudgetVerdict {
    let b = budget.for_stage(stage);
    BudgetVerdict {
        stage,
        budget: b,
        mean: summary.mean,
        p95: summary.p95,
        mean_margin: b - summary.mean,
        p95_margin: b - summary.p95,
        pass: summary.mean <= b && summary.p95 <= b,
    }
}
