//! Episode loop and the incremental adaptation experiment.

mod config;
mod report;

pub use config::{standard_eval_targets, ExperimentConfig, Profile, Scene, TargetPose};
pub use report::{emit_report, read_jsonl, write_eval_csv, EPISODES_CSV_HEADER, REPORT_FORMAT, REPORT_VERSION};

use log::{info, warn};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapt::{self, AdaptError, ParamDist, ReplayBuffer, Rollout};
use crate::control::Tracker;
use crate::metrics::{self, EpisodeResult, MetricsError, MetricsReport};
use crate::minsnap::{BoundaryState, Keypoint, MinSnapError, MinSnapSolver, Trajectory};
use crate::physics::{PhysParams, PhysicsError, World};
use crate::planner::{terminal_check, PlanError, Planner, TaskSpec, Termination, Workspace};
use crate::seed;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    MinSnap(#[from] MinSnapError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Seed path tags; every stream is `seed::derive(root, [tag, ...])`.
pub mod streams {
    pub const RUN: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const ADAPT: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const PRIOR: u64 = 5;
    pub const VALIDATION: u64 = 6;
    pub const OBS_NOISE: u64 = 7;
    pub const PLAN: u64 = 8;
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub result: EpisodeResult,
    /// Recorded environment interaction; empty when the episode ended
    /// before the first control step.
    pub rollout: Rollout,
    /// Set when planning or simulation failed and the episode was cut short.
    pub failure: Option<String>,
    pub plan_calls: usize,
    pub model_rollouts: usize,
}

fn hold_trajectory(solver: &MinSnapSolver, start: &BoundaryState) -> Result<Trajectory, MinSnapError> {
    solver.solve(start, &[Keypoint::new(start.position, crate::physics::Vec2::zeros())])
}

/// Runs one pushing task in the environment (`env_params`) with MPC planning
/// on a model (`model_params`).
///
/// At every replan instant the model is synced to the environment, the
/// planner returns the first keypoint of its best sequence, and a one-segment
/// minimum-snap trajectory to that keypoint is tracked until the next
/// replan. Each new segment starts from the position and derivatives of the
/// reference being tracked, so the commanded motion stays smooth. With `paused_planning = false` the keypoint
/// planned at one instant is only put into effect at the next one.
pub fn run_episode(
    config: &ExperimentConfig,
    env_params: &PhysParams,
    model_params: &PhysParams,
    task: &TaskSpec,
    seed: u64,
) -> Result<EpisodeOutcome, HarnessError> {
    config.validate()?;
    task.validate()?;
    let initial = config.scene.initial_state();
    let mut env = World::new(config.world.clone(), *env_params, initial.clone())?;
    let mut model = World::new(config.world.clone(), *model_params, initial.clone())?;
    let dt = env.dt();
    let mut planner = Planner::new(config.planner.clone(), config.control)?;
    let segment = MinSnapSolver::new(1, config.planner.segment_duration())?;
    let mut tracker = Tracker::new(&config.control, dt);
    let workspace = Workspace::centered(
        config.scene.object_position,
        config.planner.workspace_half_extent,
        config.planner.max_keypoint_speed,
    );
    let replan_steps = ((config.planner.replan_period / dt).round() as usize).max(1);

    let mut rollout = Rollout::new(initial.clone(), config.control.mode, dt);
    let mut result = EpisodeResult {
        success: false,
        terminal_time: 0.0,
        times: Vec::new(),
        object_trajectory: Vec::new(),
        pusher_trajectory: Vec::new(),
        object_yaw: Vec::new(),
        loss_pos: Vec::new(),
        loss_rot: Vec::new(),
    };
    let push_sample = |result: &mut EpisodeResult, state: &crate::physics::SimState, t: f64| {
        result.times.push(t);
        result.object_trajectory.push(state.object().position);
        result.pusher_trajectory.push(state.pusher.position);
        result.object_yaw.push(state.object().yaw);
        result.loss_pos.push(task.position_loss(state.object()));
        result.loss_rot.push(task.rotation_loss(state.object()));
    };
    push_sample(&mut result, env.state(), 0.0);

    let start = BoundaryState::at_rest(initial.pusher.position);
    let mut trajectory = hold_trajectory(&segment, &start)?;
    let mut trajectory_start = 0usize;
    let mut pending: Option<Keypoint> = None;
    let mut failure = None;
    let mut plan_calls = 0;
    let mut model_rollouts = 0;
    let mut k = 0usize;
    loop {
        let t = k as f64 * dt;
        match terminal_check(env.state(), t, task) {
            Termination::Success => {
                result.success = true;
                result.terminal_time = t;
                break;
            }
            Termination::Timeout => {
                result.terminal_time = t;
                break;
            }
            Termination::Running => {}
        }
        if k % replan_steps == 0 {
            let here = trajectory.sample((k - trajectory_start) as f64 * dt).boundary();
            model.sync(env.state())?;
            let planned = planner
                .plan(&model, &here, task, &workspace, seed::derive(seed, &[streams::PLAN, plan_calls as u64]));
            plan_calls += 1;
            let keypoint = match planned {
                Ok(outcome) => {
                    model_rollouts += outcome.rollouts;
                    outcome.best_first_keypoint
                }
                Err(e) => {
                    warn!("planning failed at t = {t:.3}: {e}");
                    failure = Some(format!("planning failed at t = {t:.3}: {e}"));
                    result.terminal_time = t;
                    break;
                }
            };
            let execute = if config.paused_planning {
                Some(keypoint)
            } else {
                pending.replace(keypoint)
            };
            if let Some(target) = execute {
                trajectory = segment.solve(&here, &[target])?;
                trajectory_start = k;
                tracker.reset();
            }
        }
        let reference = trajectory.sample((k - trajectory_start) as f64 * dt);
        let u = tracker.command(&reference, &env.state().pusher);
        match env.apply(u) {
            Ok(after) => {
                rollout.record(u, after);
                push_sample(&mut result, after, (k + 1) as f64 * dt);
            }
            Err(e) => {
                warn!("environment diverged at t = {t:.3}: {e}");
                failure = Some(format!("environment diverged at t = {t:.3}: {e}"));
                result.terminal_time = t;
                break;
            }
        }
        k += 1;
    }

    let noise = config.adapt.observation_noise;
    if noise > 0.0 && !rollout.controls.is_empty() {
        let normal = Normal::new(0.0, noise).map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut rng = seed::stream(seed, &[streams::OBS_NOISE]);
        for i in 0..rollout.controls.len() {
            rollout.observed_pusher[i].x += normal.sample(&mut rng);
            rollout.observed_pusher[i].y += normal.sample(&mut rng);
            rollout.observed_object[i].x += normal.sample(&mut rng);
            rollout.observed_object[i].y += normal.sample(&mut rng);
            rollout.observed_yaw[i] += normal.sample(&mut rng);
        }
    }

    Ok(EpisodeOutcome {
        result,
        rollout,
        failure,
        plan_calls,
        model_rollouts,
    })
}

/// Executed evaluation tasks and their aggregate metrics.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub outcomes: Vec<EpisodeOutcome>,
    pub report: MetricsReport,
}

/// Runs the first `config.eval_tasks` evaluation targets with `model_params`,
/// each from a freshly reset environment.
pub fn evaluate(config: &ExperimentConfig, model_params: &PhysParams, seed: u64) -> Result<Evaluation, HarnessError> {
    let tasks = &config.eval_targets[..config.eval_tasks];
    if tasks.is_empty() {
        return Err(MetricsError::Empty.into());
    }
    let outcomes = tasks
        .par_iter()
        .enumerate()
        .map(|(j, target)| {
            run_episode(
                config,
                &config.env_params,
                model_params,
                &config.task_for(target),
                seed::derive(seed, &[streams::EVAL, j as u64]),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let results: Vec<EpisodeResult> = outcomes.iter().map(|o| o.result.clone()).collect();
    let report = metrics::report(&results, config.task.lambda_rot, config.smoothing_sigma)?;
    Ok(Evaluation { outcomes, report })
}

/// Held-out rollouts executed with ground-truth parameters on both sides.
pub fn validation_buffer(config: &ExperimentConfig) -> Result<ReplayBuffer, HarnessError> {
    let targets = &config.validation_targets[..config.validation_rollouts];
    let outcomes = targets
        .par_iter()
        .enumerate()
        .map(|(i, target)| {
            run_episode(
                config,
                &config.env_params,
                &config.env_params,
                &config.task_for(target),
                seed::derive(config.seed, &[streams::VALIDATION, i as u64]),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut buffer = ReplayBuffer::new();
    for o in outcomes {
        if !o.rollout.controls.is_empty() {
            buffer.append(o.rollout)?;
        }
    }
    Ok(buffer)
}

/// Mean weighted replay mismatch per rollout of `buffer` under `params`.
pub fn validation_loss(params: &PhysParams, buffer: &ReplayBuffer, config: &ExperimentConfig) -> Option<f64> {
    if buffer.is_empty() {
        return None;
    }
    let total = adapt::replay_cost(params, buffer, &config.world, &config.adapt);
    Some(total / buffer.len() as f64)
}

/// Outcome of the training task of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub target: usize,
    pub success: bool,
    pub terminal_time: f64,
    pub final_loss: f64,
    pub steps: usize,
    pub plan_calls: usize,
    pub failure: Option<String>,
}

/// One line of the experiment log. Episode 0 describes the prior mean before
/// any interaction; episode `i >= 1` the parameters after optimizing on the
/// first `i` recorded rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub run: usize,
    pub episode: usize,
    pub seed: u64,
    pub params: PhysParams,
    pub param_errors: [f64; 4],
    pub buffer_len: usize,
    pub validation_loss: Option<f64>,
    pub adapt_cost: Option<f64>,
    pub adapt_warning: bool,
    pub train: Option<TrainSummary>,
    pub eval: Option<MetricsReport>,
    pub eval_success: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub config: ExperimentConfig,
    pub records: Vec<EpisodeRecord>,
    /// Final replay buffer of each run.
    pub buffers: Vec<ReplayBuffer>,
}

impl RunLog {
    pub fn run_records(&self, run: usize) -> impl Iterator<Item = &EpisodeRecord> {
        self.records.iter().filter(move |r| r.run == run)
    }
}

fn record(
    config: &ExperimentConfig,
    run: usize,
    episode: usize,
    run_seed: u64,
    params: PhysParams,
    validation: &ReplayBuffer,
) -> Result<EpisodeRecord, HarnessError> {
    let (eval, eval_success) = if config.eval_tasks > 0 {
        let e = evaluate(config, &params, seed::derive(run_seed, &[episode as u64]))?;
        let successes = e.outcomes.iter().map(|o| o.result.success).collect();
        (Some(e.report), successes)
    } else {
        (None, Vec::new())
    };
    Ok(EpisodeRecord {
        run,
        episode,
        seed: run_seed,
        params,
        param_errors: params.relative_errors(&config.env_params),
        buffer_len: 0,
        validation_loss: validation_loss(&params, validation, config),
        adapt_cost: None,
        adapt_warning: false,
        train: None,
        eval,
        eval_success,
    })
}

fn run_single(
    config: &ExperimentConfig,
    run: usize,
    validation: &ReplayBuffer,
) -> Result<(Vec<EpisodeRecord>, ReplayBuffer), HarnessError> {
    let run_seed = seed::derive(config.seed, &[streams::RUN, run as u64]);
    let nominal = config.env_params;
    let prior = adapt::init_prior(&nominal, config.adapt.delta, &mut seed::stream(run_seed, &[streams::PRIOR]))
        .restrict(&config.adapt.optimized, &nominal);
    let mut dist: ParamDist = prior;
    let mut params = prior.mean_params();
    let mut buffer = ReplayBuffer::new();
    let mut records = vec![record(config, run, 0, run_seed, params, validation)?];
    for episode in 1..=config.episodes {
        let target_idx = (episode - 1) % config.train_targets.len();
        let task = config.task_for(&config.train_targets[target_idx]);
        let outcome = run_episode(
            config,
            &config.env_params,
            &params,
            &task,
            seed::derive(run_seed, &[streams::TRAIN, episode as u64]),
        )?;
        if let Some(f) = &outcome.failure {
            warn!("run {run} episode {episode}: {f}");
        }
        let train = TrainSummary {
            target: target_idx,
            success: outcome.result.success,
            terminal_time: outcome.result.terminal_time,
            final_loss: outcome
                .result
                .loss_pos
                .last()
                .zip(outcome.result.loss_rot.last())
                .map_or(f64::NAN, |(p, r)| p + task.lambda_rot * r),
            steps: outcome.rollout.controls.len(),
            plan_calls: outcome.plan_calls,
            failure: outcome.failure.clone(),
        };
        if !outcome.rollout.controls.is_empty() {
            buffer.append(outcome.rollout)?;
        }
        let mut adapt_cost = None;
        let mut adapt_warning = false;
        if !buffer.is_empty() {
            let start = if config.adapt.reset_to_prior { prior } else { dist };
            let opt = adapt::optimize(
                &buffer,
                &start,
                &config.adapt,
                &config.world,
                seed::derive(run_seed, &[streams::ADAPT, episode as u64]),
            )?;
            if !opt.warning {
                params = opt.best_params;
                dist = opt.dist;
            }
            adapt_cost = Some(opt.best_cost).filter(|c| c.is_finite());
            adapt_warning = opt.warning;
        }
        let mut rec = record(config, run, episode, run_seed, params, validation)?;
        rec.buffer_len = buffer.len();
        rec.adapt_cost = adapt_cost;
        rec.adapt_warning = adapt_warning;
        rec.train = Some(train);
        info!(
            "run {run} episode {episode}: sliding {:.4} (err {:.3}), validation {:?}",
            params.sliding, rec.param_errors[0], rec.validation_loss
        );
        records.push(rec);
    }
    Ok((records, buffer))
}

/// Full protocol: per run, sample a prior mean, then alternate task
/// execution, buffer growth, parameter optimization and evaluation.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunLog, HarnessError> {
    config.validate()?;
    let validation = validation_buffer(config)?;
    let runs = (0..config.runs)
        .into_par_iter()
        .map(|run| run_single(config, run, &validation))
        .collect::<Result<Vec<_>, _>>()?;
    let mut records = Vec::new();
    let mut buffers = Vec::new();
    for (r, b) in runs {
        records.extend(r);
        buffers.push(b);
    }
    Ok(RunLog {
        config: config.clone(),
        records,
        buffers,
    })
}

/// Parameter optimization on previously saved buffers, starting from the
/// prior of run 0.
pub fn replay_optimize(config: &ExperimentConfig, buffer: &ReplayBuffer) -> Result<adapt::AdaptOutcome, HarnessError> {
    config.validate()?;
    let run_seed = seed::derive(config.seed, &[streams::RUN, 0]);
    let nominal = config.env_params;
    let prior = adapt::init_prior(&nominal, config.adapt.delta, &mut seed::stream(run_seed, &[streams::PRIOR]))
        .restrict(&config.adapt.optimized, &nominal);
    Ok(adapt::optimize(
        buffer,
        &prior,
        &config.adapt,
        &config.world,
        seed::derive(run_seed, &[streams::ADAPT, 0]),
    )?)
}
