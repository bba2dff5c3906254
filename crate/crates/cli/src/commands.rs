use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use shadow_core::dataset::{load_pairs, synthetic_pairs, write_dataset};
use shadow_core::gan::{run_toy_adversarial, write_history_csv, ToyConfig};
use shadow_core::latency::{
    check_budget, run_load_experiment, summarize, LoadLevel, Stage, StageBudget,
};
use shadow_core::mapping::{checkpoint, evaluate, train as fit, RegressorModel, TrainConfig};
use shadow_core::metrics::{aur_from_file, maid_from_files};
use shadow_core::pipeline::{
    run_stream, toy_processor, toy_session, ControlSink, FrameSource, NullSink, PipelineConfig,
    ReaderSource, SocketSink, SyntheticSource, WriterSink, DEFAULT_FRAME_PORT,
};
use shadow_core::synth::SynthWorld;

use crate::config::{is_false, layered};
use crate::CliError;

fn write_json(value: &serde_json::Value, out: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Validation(format!("{flag} is required")))
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct GenArgs {
    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Number of samples [default: 2000].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Base seed [default: 0].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Image side in pixels [default: 24].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub res: Option<usize>,
}

pub fn gen(args: GenArgs, config: Option<&Path>) -> Result<(), CliError> {
    let a = layered(&args, config)?;
    let out = required(a.out, "--out")?;
    let res = a.res.unwrap_or(24);
    let index = write_dataset(
        &out,
        &SynthWorld::published(),
        a.count.unwrap_or(2000),
        a.seed.unwrap_or(0),
        (res, res),
    )?;
    eprintln!("wrote {} samples to {}", index.samples.len(), out.display());
    Ok(())
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainArgs {
    /// Dataset directory written by `gen`; synthesized in memory if absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Samples to synthesize when no dataset is given [default: 2000].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Held-out samples for evaluation [default: 500].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub held_out: Option<usize>,
    /// Image side for synthesized data [default: 24].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub res: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    /// Feature-adaptation weight [default: 0.0005].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_fa: Option<f64>,
    /// Train without the feature-adaptation term.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub no_fa: bool,
    /// Hidden layer widths of the feature extractor [default: 32].
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    /// Checkpoint output path.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Where to write the JSON report; stdout if absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

pub fn train(args: TrainArgs, config: Option<&Path>) -> Result<(), CliError> {
    let a = layered(&args, config)?;
    if a.no_fa && a.lambda_fa.is_some() {
        return Err(CliError::Validation(
            "--no-fa and --lambda-fa cannot be combined".into(),
        ));
    }
    let defaults = TrainConfig::default();
    let seed = a.seed.unwrap_or(0);
    let cfg = TrainConfig {
        lr: a.lr.unwrap_or(defaults.lr),
        batch: a.batch.unwrap_or(defaults.batch),
        epochs: a.epochs.unwrap_or(defaults.epochs),
        lambda_fa: if a.no_fa { 0.0 } else { a.lambda_fa.unwrap_or(defaults.lambda_fa) },
        seed,
        ..defaults
    };
    cfg.validate()?;
    let world = SynthWorld::published();
    let data = match &a.data {
        Some(dir) => load_pairs(dir)?,
        None => {
            let res = a.res.unwrap_or(24);
            synthetic_pairs(&world, a.count.unwrap_or(2000), seed, (res, res))?
        }
    };
    let Some(first) = data.first() else {
        return Err(CliError::Validation("training set is empty".into()));
    };
    let (h, w) = first.input.dims();
    let held = synthetic_pairs(&world, a.held_out.unwrap_or(500), seed.wrapping_add(1), (h, w))?;
    let hidden = a.hidden.unwrap_or_else(|| vec![32]);
    let mut model = RegressorModel::new(h, w, &hidden, seed)?;
    let report = fit(&mut model, &data, &cfg)?;
    let eval = if held.is_empty() { None } else { Some(evaluate(&model, &held, cfg.delta)?) };
    if let Some(out) = &a.out {
        checkpoint::save(&model, out)?;
    }
    write_json(
        &json!({
            "config": cfg,
            "samples": data.len(),
            "steps": report.steps,
            "epoch_loss": report.epoch_loss,
            "held_out": eval,
            "checkpoint": a.out,
        }),
        a.report.as_deref(),
    )
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct FinetuneArgs {
    /// Training steps [default: 200].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// CSV output path; stdout if absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

pub fn finetune_demo(args: FinetuneArgs, config: Option<&Path>) -> Result<(), CliError> {
    let a = layered(&args, config)?;
    let defaults = ToyConfig::default();
    let cfg = ToyConfig {
        steps: a.steps.unwrap_or(defaults.steps),
        seed: a.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    let history = run_toy_adversarial(&cfg)?;
    match &a.out {
        Some(p) => write_history_csv(&history, BufWriter::new(File::create(p)?))?,
        None => write_history_csv(&history, std::io::stdout().lock())?,
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Synthetic,
    Socket,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SinkKind {
    Null,
    Socket,
    File,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunArgs {
    /// Frame source [default: synthetic].
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceKind>,
    /// Frame file for `--source file`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Listening port for `--source socket` [default: 7588].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub port: Option<u16>,
    /// Frame rate [default: 30].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    /// Synthetic session length in seconds [default: 10].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// Control sink [default: null].
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sink: Option<SinkKind>,
    /// host:port for `--sink socket`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sink_addr: Option<String>,
    /// Output file for `--sink file`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sink_path: Option<PathBuf>,
    /// Regressor checkpoint; a seeded untrained model is used if absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Session report path; stdout if absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    /// Extra delay per control generation, in milliseconds.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control_delay_ms: Option<f64>,
    /// Re-capture the motion reference at this frame sequence number.
    #[arg(long, value_name = "SEQ")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rebase: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn stage_table(summaries: &BTreeMap<Stage, shadow_core::latency::LatencySummary>) -> serde_json::Value {
    let budget = StageBudget::default();
    let rows: serde_json::Map<String, serde_json::Value> = Stage::ALL
        .into_iter()
        .map(|st| {
            let row = match summaries.get(&st) {
                Some(s) => {
                    let v = check_budget(s, &budget, st);
                    json!({
                        "budget": v.budget,
                        "mean": s.mean,
                        "p95": s.p95,
                        "max": s.max,
                        "mean_margin": v.mean_margin,
                        "p95_margin": v.p95_margin,
                        "within_budget": v.pass,
                    })
                }
                None => json!({ "budget": budget.for_stage(st), "mean": null, "p95": null, "max": null }),
            };
            (st.as_str().to_string(), row)
        })
        .collect();
    serde_json::Value::Object(rows)
}

pub fn run(args: RunArgs, config: Option<&Path>) -> Result<(), CliError> {
    let a = layered(&args, config)?;
    let mut cfg = PipelineConfig {
        fps: a.fps.unwrap_or(30.0),
        control_delay_ms: a.control_delay_ms.unwrap_or(0.0),
        rebase_at: a.rebase,
        seed: a.seed.unwrap_or(0),
        ..PipelineConfig::default()
    };
    let model = match &a.model {
        Some(p) => {
            let m = checkpoint::load(p)?;
            let (h, w) = m.input_dims();
            if h != w {
                return Err(CliError::Validation(format!(
                    "checkpoint input must be square, got {h}x{w}"
                )));
            }
            cfg.model_input = h;
            Some(m)
        }
        None => None,
    };
    cfg.validate()?;
    let world = SynthWorld::published();
    let processor = toy_processor(&world, &cfg, model)?;
    let mut state = toy_session(&world, &cfg)?;

    let mut source: Box<dyn FrameSource> = match a.source.unwrap_or(SourceKind::Synthetic) {
        SourceKind::Synthetic => {
            let frames = (a.duration.unwrap_or(10.0) * cfg.fps).round().max(0.0) as u64;
            Box::new(SyntheticSource::new(world, cfg.fps, frames, cfg.preprocess_size, cfg.seed))
        }
        SourceKind::File => {
            let path = required(a.input.as_ref(), "--input")?;
            Box::new(ReaderSource::open(path, Some(cfg.fps))?)
        }
        SourceKind::Socket => {
            let port = a.port.unwrap_or(DEFAULT_FRAME_PORT);
            eprintln!("waiting for a frame client on port {port}");
            Box::new(ReaderSource::accept(("0.0.0.0", port))?)
        }
    };
    let mut sink: Box<dyn ControlSink> = match a.sink.unwrap_or(SinkKind::Null) {
        SinkKind::Null => Box::new(NullSink),
        SinkKind::File => {
            let path = required(a.sink_path.as_ref(), "--sink-path")?;
            Box::new(WriterSink(BufWriter::new(File::create(path)?)))
        }
        SinkKind::Socket => Box::new(SocketSink::new(required(a.sink_addr.clone(), "--sink-addr")?)),
    };

    let mut report = run_stream(source.as_mut(), sink.as_mut(), &processor, &mut state, &cfg)?;
    let stages = stage_table(&report.summaries);
    report.records.clear();
    report.generation_times.clear();
    write_json(
        &json!({ "session": report, "stages": stages }),
        a.report.as_deref(),
    )
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct BenchArgs {
    /// idle, a CPU percentage such as 50 or 90, or N-workers [default: idle].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub load: Option<String>,
    /// Seconds per repeat [default: 10].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// Repeats per condition [default: 3].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    /// Report path; stdout if absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

pub fn bench(args: BenchArgs, config: Option<&Path>) -> Result<(), CliError> {
    let a = layered(&args, config)?;
    let level: LoadLevel = a.load.as_deref().unwrap_or("idle").parse()?;
    let duration = a.duration.unwrap_or(10.0);
    let repeats = a.repeats.unwrap_or(3);
    let cfg = PipelineConfig {
        fps: a.fps.unwrap_or(30.0),
        ..PipelineConfig::default()
    };
    let runs = run_load_experiment(&cfg, level, duration, repeats)?;

    let mut pooled: BTreeMap<Stage, Vec<f64>> = BTreeMap::new();
    for r in &runs {
        for (st, xs) in &r.samples {
            pooled.entry(*st).or_default().extend(xs);
        }
    }
    let summaries: BTreeMap<Stage, _> = pooled
        .iter()
        .filter_map(|(st, xs)| summarize(xs).ok().map(|s| (*st, s)))
        .collect();
    let condition = match summaries.get(&Stage::Total) {
        Some(s) => json!({
            "mean": s.mean, "std": s.std, "p95": s.p95, "p99": s.p99, "max": s.max, "count": s.count,
        }),
        None => json!(null),
    };
    write_json(
        &json!({
            "fps": cfg.fps,
            "duration_s": duration,
            "repeats": repeats,
            "conditions": { level.label(): condition },
            "stages": stage_table(&summaries),
            "runs": runs,
        }),
        a.out.as_deref(),
    )
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct MetricsArgs {
    /// Human AU intensities (CSV, header of AU names).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub human: Option<PathBuf>,
    /// Robot AU intensities, same columns as --human.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robot: Option<PathBuf>,
    /// Ratings (CSV, one column per rater).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratings: Option<PathBuf>,
    /// Output path; stdout if absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

pub fn metrics(args: MetricsArgs, config: Option<&Path>) -> Result<(), CliError> {
    let a = layered(&args, config)?;
    let maid = match (&a.human, &a.robot) {
        (Some(h), Some(r)) => Some(maid_from_files(h, r)?),
        (None, None) => None,
        _ => {
            return Err(CliError::Validation(
                "--human and --robot must be given together".into(),
            ))
        }
    };
    let aur = a.ratings.as_deref().map(aur_from_file).transpose()?;
    if maid.is_none() && aur.is_none() {
        return Err(CliError::Validation(
            "nothing to compute: pass --human/--robot and/or --ratings".into(),
        ));
    }
    write_json(
        &json!({
            "maid": maid,
            "aur_mean": aur.as_ref().map(|r| r.mean),
            "aur_std": aur.as_ref().map(|r| r.std),
            "per_rater": aur.as_ref().map(|r| &r.per_rater),
        }),
        a.out.as_deref(),
    )?;
    std::io::stdout().flush()?;
    Ok(())
}
