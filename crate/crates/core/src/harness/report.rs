use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{EpisodeRecord, HarnessError, RunLog};
use crate::metrics::{EpisodeResult, MetricsReport};

pub const REPORT_FORMAT: &str = "pushadapt.report";
pub const REPORT_VERSION: u32 = 1;

pub const EPISODES_CSV_HEADER: [&str; 23] = [
    "run",
    "episode",
    "seed",
    "theta_s",
    "theta_t",
    "theta_r",
    "theta_m",
    "err_s",
    "err_t",
    "err_r",
    "err_m",
    "buffer_len",
    "validation_loss",
    "adapt_cost",
    "train_success",
    "train_time",
    "train_failed",
    "eval_success_rate",
    "eval_mean_time",
    "eval_object_loss",
    "eval_object_length",
    "eval_pusher_length",
    "eval_tasks",
];

#[derive(Serialize)]
struct EpisodeRow {
    run: usize,
    episode: usize,
    seed: u64,
    theta_s: f64,
    theta_t: f64,
    theta_r: f64,
    theta_m: f64,
    err_s: f64,
    err_t: f64,
    err_r: f64,
    err_m: f64,
    buffer_len: usize,
    validation_loss: Option<f64>,
    adapt_cost: Option<f64>,
    train_success: Option<bool>,
    train_time: Option<f64>,
    train_failed: Option<bool>,
    eval_success_rate: Option<f64>,
    eval_mean_time: Option<f64>,
    eval_object_loss: Option<f64>,
    eval_object_length: Option<f64>,
    eval_pusher_length: Option<f64>,
    eval_tasks: usize,
}

impl From<&EpisodeRecord> for EpisodeRow {
    fn from(r: &EpisodeRecord) -> Self {
        let e = r.eval.as_ref();
        Self {
            run: r.run,
            episode: r.episode,
            seed: r.seed,
            theta_s: r.params.sliding,
            theta_t: r.params.torsional,
            theta_r: r.params.rolling,
            theta_m: r.params.pusher_mass,
            err_s: r.param_errors[0],
            err_t: r.param_errors[1],
            err_r: r.param_errors[2],
            err_m: r.param_errors[3],
            buffer_len: r.buffer_len,
            validation_loss: r.validation_loss,
            adapt_cost: r.adapt_cost,
            train_success: r.train.as_ref().map(|t| t.success),
            train_time: r.train.as_ref().map(|t| t.terminal_time),
            train_failed: r.train.as_ref().map(|t| t.failure.is_some()),
            eval_success_rate: e.map(|m| m.success_rate),
            eval_mean_time: e.map(|m| m.mean_time),
            eval_object_loss: e.map(|m| m.avg_object_loss),
            eval_object_length: e.map(|m| m.avg_object_length),
            eval_pusher_length: e.map(|m| m.avg_pusher_length),
            eval_tasks: r.eval_success.len(),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'a str,
    version: u32,
    runs: usize,
    episodes: usize,
    records: usize,
    config: &'a super::ExperimentConfig,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, HarnessError> {
    Ok(csv::WriterBuilder::new().has_headers(false).from_path(path)?)
}

/// Writes `manifest.json`, `episodes.csv`, `records.jsonl` and one
/// `buffers/run_<r>.json` per run into `out_dir`. Returns the written paths.
pub fn emit_report(log: &RunLog, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let manifest = out_dir.join("manifest.json");
    let m = Manifest {
        format: REPORT_FORMAT,
        version: REPORT_VERSION,
        runs: log.config.runs,
        episodes: log.config.episodes,
        records: log.records.len(),
        config: &log.config,
    };
    fs::write(&manifest, serde_json::to_string_pretty(&m)? + "\n")?;
    written.push(manifest);

    let csv_path = out_dir.join("episodes.csv");
    let mut w = csv_writer(&csv_path)?;
    w.write_record(EPISODES_CSV_HEADER)?;
    for r in &log.records {
        w.serialize(EpisodeRow::from(r))?;
    }
    w.flush()?;
    written.push(csv_path);

    let jsonl = out_dir.join("records.jsonl");
    let mut f = BufWriter::new(fs::File::create(&jsonl)?);
    for r in &log.records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    written.push(jsonl);

    if !log.buffers.is_empty() {
        let dir = out_dir.join("buffers");
        fs::create_dir_all(&dir)?;
        for (run, buffer) in log.buffers.iter().enumerate() {
            let path = dir.join(format!("run_{run}.json"));
            buffer.save(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct EvalRow<'a> {
    task: &'a str,
    success: f64,
    time: f64,
    object_loss: f64,
    object_length: f64,
    pusher_length: f64,
}

/// One row per task plus an `all` row with the aggregate report.
pub fn write_eval_csv(
    results: &[EpisodeResult],
    report: &MetricsReport,
    lambda_rot: f64,
    smoothing_sigma: f64,
    path: &Path,
) -> Result<(), HarnessError> {
    let mut w = csv_writer(path)?;
    w.write_record(["task", "success", "time", "object_loss", "object_length", "pusher_length"])?;
    for (j, r) in results.iter().enumerate() {
        let single = crate::metrics::report(std::slice::from_ref(r), lambda_rot, smoothing_sigma)?;
        w.serialize(EvalRow {
            task: &j.to_string(),
            success: single.success_rate,
            time: single.mean_time,
            object_loss: single.avg_object_loss,
            object_length: single.avg_object_length,
            pusher_length: single.avg_pusher_length,
        })?;
    }
    w.serialize(EvalRow {
        task: "all",
        success: report.success_rate,
        time: report.mean_time,
        object_loss: report.avg_object_loss,
        object_length: report.avg_object_length,
        pusher_length: report.avg_pusher_length,
    })?;
    w.flush()?;
    Ok(())
}
