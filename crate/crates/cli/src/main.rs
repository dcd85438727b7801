use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use pushadapt_core::adapt::ReplayBuffer;
use pushadapt_core::harness::{self, ExperimentConfig, Profile};
use pushadapt_core::physics::PhysParams;

#[derive(Parser)]
#[command(name = "pushadapt", version, about = "Pushing MPC with replay-buffer physics parameter adaptation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file overriding profile defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value = "sim")]
    profile: Profile,
    /// Worker threads (wall time only; results do not depend on it).
    #[arg(long, global = true, env = "PUSHADAPT_THREADS")]
    threads: Option<usize>,
    /// Large budgets: N = 128 and 10 runs.
    #[arg(long, global = true)]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full adaptation experiment and write the report.
    Experiment,
    /// Execute one task and save its trajectories and recorded rollout.
    Episode {
        /// Index into the evaluation targets.
        #[arg(long, default_value_t = 0)]
        target: usize,
        /// Model parameters `sliding,torsional,rolling,pusher_mass`; defaults to the environment's.
        #[arg(long, value_parser = parse_params)]
        params: Option<PhysParams>,
    },
    /// Optimize parameters offline on saved replay buffers.
    ReplayOpt {
        /// Buffer files; their rollouts are concatenated in the given order.
        #[arg(long = "buffer", required = true)]
        buffers: Vec<PathBuf>,
    },
    /// Run the evaluation tasks with the given model parameters.
    Eval {
        #[arg(long, value_parser = parse_params)]
        params: Option<PhysParams>,
    },
}

fn parse_params(text: &str) -> Result<PhysParams, String> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; 4] = values
        .try_into()
        .map_err(|_| "expected four comma-separated values".to_string())?;
    if arr.iter().any(|v| !v.is_finite()) {
        return Err("parameters must be finite".into());
    }
    Ok(PhysParams::from_array(arr))
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path, common.profile, common.paper_scale)
            .with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::for_profile(common.profile, common.paper_scale),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn experiment(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let log = harness::run_experiment(cfg)?;
    let files = harness::emit_report(&log, out)?;
    for run in 0..cfg.runs {
        if let Some(last) = log.run_records(run).last() {
            println!(
                "run {run}: episodes {} sliding {:.4} (rel. err {:.3}) validation loss {}",
                last.episode,
                last.params.sliding,
                last.param_errors[0],
                last.validation_loss.map_or("-".into(), |v| format!("{v:.4e}"))
            );
        }
    }
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

fn episode(cfg: &ExperimentConfig, out: &Path, target: usize, params: Option<PhysParams>) -> Result<()> {
    let Some(pose) = cfg.eval_targets.get(target) else {
        bail!("target {target} out of range (0..{})", cfg.eval_targets.len());
    };
    let model = params.unwrap_or(cfg.env_params);
    let task = cfg.task_for(pose);
    let outcome = harness::run_episode(cfg, &cfg.env_params, &model, &task, cfg.seed)?;
    fs::create_dir_all(out)?;
    write_json(
        &out.join("episode.json"),
        &json!({
            "target": target,
            "task": task,
            "model_params": model,
            "plan_calls": outcome.plan_calls,
            "model_rollouts": outcome.model_rollouts,
            "failure": outcome.failure,
            "result": outcome.result,
        }),
    )?;
    if !outcome.rollout.controls.is_empty() {
        let mut buffer = ReplayBuffer::new();
        buffer.append(outcome.rollout)?;
        buffer.save(&out.join("buffer.json"))?;
    }
    println!(
        "target {target}: {} at t = {:.3} s after {} plans",
        if outcome.result.success { "success" } else { "no success" },
        outcome.result.terminal_time,
        outcome.plan_calls
    );
    if let Some(f) = outcome.failure {
        bail!("episode failed: {f}");
    }
    Ok(())
}

fn replay_opt(cfg: &ExperimentConfig, out: &Path, paths: &[PathBuf]) -> Result<()> {
    let mut buffer = ReplayBuffer::new();
    for path in paths {
        let loaded = ReplayBuffer::load(path).with_context(|| format!("loading {}", path.display()))?;
        for rollout in loaded.rollouts() {
            buffer.append(rollout.clone())?;
        }
    }
    let outcome = harness::replay_optimize(cfg, &buffer)?;
    fs::create_dir_all(out)?;
    write_json(
        &out.join("replay_opt.json"),
        &json!({
            "rollouts": buffer.len(),
            "best_params": outcome.best_params,
            "best_cost": outcome.best_cost,
            "param_errors": outcome.best_params.relative_errors(&cfg.env_params),
            "dist": outcome.dist,
            "iterations": outcome.iterations,
            "warning": outcome.warning,
        }),
    )?;
    let p = outcome.best_params;
    println!(
        "{} rollouts: sliding {:.5} torsional {:.5} rolling {:.3e} pusher_mass {:.4} cost {:.4e}",
        buffer.len(),
        p.sliding,
        p.torsional,
        p.rolling,
        p.pusher_mass,
        outcome.best_cost
    );
    if outcome.warning {
        bail!("no candidate produced a finite replay cost");
    }
    Ok(())
}

fn eval(cfg: &ExperimentConfig, out: &Path, params: Option<PhysParams>) -> Result<()> {
    let mut cfg = cfg.clone();
    if cfg.eval_tasks == 0 {
        cfg.eval_tasks = cfg.eval_targets.len();
    }
    let model = params.unwrap_or(cfg.env_params);
    let evaluation = harness::evaluate(&cfg, &model, cfg.seed)?;
    fs::create_dir_all(out)?;
    let results: Vec<_> = evaluation.outcomes.iter().map(|o| o.result.clone()).collect();
    harness::write_eval_csv(
        &results,
        &evaluation.report,
        cfg.task.lambda_rot,
        cfg.smoothing_sigma,
        &out.join("eval.csv"),
    )?;
    write_json(
        &out.join("eval.json"),
        &json!({
            "model_params": model,
            "report": evaluation.report,
            "tasks": results,
        }),
    )?;
    let r = evaluation.report;
    println!(
        "success {:.2} mean time {:.3} s object loss {:.4e} object length {:.4} m pusher length {:.4} m",
        r.success_rate, r.mean_time, r.avg_object_loss, r.avg_object_length, r.avg_pusher_length
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = load_config(&cli.common)?;
    info!("profile {:?}, seed {}, threads {}", cfg.profile, cfg.seed, rayon::current_num_threads());
    let out = &cli.common.out;
    match cli.command {
        Command::Experiment => experiment(&cfg, out),
        Command::Episode { target, params } => episode(&cfg, out, target, params),
        Command::ReplayOpt { buffers } => replay_opt(&cfg, out, &buffers),
        Command::Eval { params } => eval(&cfg, out, params),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
