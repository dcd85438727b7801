//! Few-shot identification of physics parameters from recorded rollouts.
//!
//! Recorded controls are replayed open-loop through the engine under each
//! candidate parameter set; the mismatch between predicted and observed
//! object/pusher trajectories is minimized with the cross-entropy method.

use std::fs;
use std::path::Path;

use log::{debug, warn};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::ControlMode;
use crate::physics::{Control, ParamKind, PhysParams, PhysicsError, SimState, Vec2, World, WorldConfig, PARAM_FLOOR};
use crate::planner::rank;
use crate::seed;

pub const BUFFER_FORMAT: &str = "pushadapt.replay_buffer";
pub const BUFFER_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("rollout is empty")]
    EmptyRollout,
    #[error("rollout sequences disagree in length: controls {controls}, pusher {pusher}, object {object}, yaw {yaw}")]
    LengthMismatch {
        controls: usize,
        pusher: usize,
        object: usize,
        yaw: usize,
    },
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("invalid adaptation config: {0}")]
    InvalidConfig(String),
    #[error("unsupported buffer file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

/// One recorded task execution: initial state, per-step controls and the
/// observed trajectories after each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub initial_state: SimState,
    pub mode: ControlMode,
    pub dt: f64,
    pub controls: Vec<Vec2>,
    pub observed_pusher: Vec<Vec2>,
    pub observed_object: Vec<Vec2>,
    pub observed_yaw: Vec<f64>,
}

impl Rollout {
    pub fn new(initial_state: SimState, mode: ControlMode, dt: f64) -> Self {
        Self {
            initial_state,
            mode,
            dt,
            controls: Vec::new(),
            observed_pusher: Vec::new(),
            observed_object: Vec::new(),
            observed_yaw: Vec::new(),
        }
    }

    /// Appends one step: the applied control and the resulting state.
    pub fn record(&mut self, control: Control, after: &SimState) {
        self.controls.push(control.value());
        self.observed_pusher.push(after.pusher.position);
        self.observed_object.push(after.object().position);
        self.observed_yaw.push(after.object().yaw);
    }

    pub fn duration_steps(&self) -> usize {
        self.controls.len()
    }

    pub fn validate(&self) -> Result<(), AdaptError> {
        let lens = (
            self.controls.len(),
            self.observed_pusher.len(),
            self.observed_object.len(),
            self.observed_yaw.len(),
        );
        if lens.0 != lens.1 || lens.0 != lens.2 || lens.0 != lens.3 {
            return Err(AdaptError::LengthMismatch {
                controls: lens.0,
                pusher: lens.1,
                object: lens.2,
                yaw: lens.3,
            });
        }
        if lens.0 == 0 {
            return Err(AdaptError::EmptyRollout);
        }
        Ok(())
    }

    fn control(&self, k: usize) -> Control {
        match self.mode {
            ControlMode::Force => Control::Force(self.controls[k]),
            ControlMode::Velocity => Control::Velocity(self.controls[k]),
        }
    }
}

/// Append-only set of recorded rollouts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayBuffer {
    rollouts: Vec<Rollout>,
}

impl ReplayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, rollout: Rollout) -> Result<(), AdaptError> {
        rollout.validate()?;
        self.rollouts.push(rollout);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rollouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }

    pub fn rollouts(&self) -> &[Rollout] {
        &self.rollouts
    }

    pub fn total_steps(&self) -> usize {
        self.rollouts.iter().map(Rollout::duration_steps).sum()
    }
}

/// Predicted trajectories of a replay, one entry per recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub object: Vec<Vec2>,
    pub pusher: Vec<Vec2>,
    pub yaw: Vec<f64>,
}

/// Replays the recorded controls under `candidate`.
pub fn replay(candidate: &PhysParams, rollout: &Rollout, world: &WorldConfig) -> Result<Prediction, AdaptError> {
    rollout.validate()?;
    let mut sim = World::new(world.clone(), *candidate, rollout.initial_state.clone())?;
    let n = rollout.duration_steps();
    let mut out = Prediction {
        object: Vec::with_capacity(n),
        pusher: Vec::with_capacity(n),
        yaw: Vec::with_capacity(n),
    };
    for k in 0..n {
        let s = sim.apply(rollout.control(k))?;
        out.object.push(s.object().position);
        out.pusher.push(s.pusher.position);
        out.yaw.push(s.object().yaw);
    }
    Ok(out)
}

/// Squared angle between the heading vectors of two yaw angles.
pub fn heading_error_sq(a: f64, b: f64) -> f64 {
    let dot = a.cos() * b.cos() + a.sin() * b.sin();
    dot.clamp(-1.0, 1.0).acos().powi(2)
}

/// The three summed mismatch terms of one or more rollouts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayTerms {
    pub object_position: f64,
    pub pusher_position: f64,
    pub object_rotation: f64,
}

impl ReplayTerms {
    pub fn weighted(&self, kappa_r: f64, kappa_rot: f64) -> f64 {
        self.object_position + kappa_r * self.pusher_position + kappa_rot * self.object_rotation
    }
}

/// Mismatch terms of replaying one rollout under `candidate`.
pub fn replay_terms(candidate: &PhysParams, rollout: &Rollout, world: &WorldConfig) -> Result<ReplayTerms, AdaptError> {
    rollout.validate()?;
    let mut sim = World::new(world.clone(), *candidate, rollout.initial_state.clone())?;
    let mut terms = ReplayTerms::default();
    for k in 0..rollout.duration_steps() {
        let s = sim.apply(rollout.control(k))?;
        let object = s.object();
        terms.object_position += (object.position - rollout.observed_object[k]).norm_squared();
        terms.pusher_position += (s.pusher.position - rollout.observed_pusher[k]).norm_squared();
        terms.object_rotation += heading_error_sq(object.yaw, rollout.observed_yaw[k]);
    }
    Ok(terms)
}

/// Weighted replay mismatch summed over the buffer in rollout order;
/// `+inf` when any replay diverges.
pub fn replay_cost(candidate: &PhysParams, buffer: &ReplayBuffer, world: &WorldConfig, config: &AdaptConfig) -> f64 {
    let mut total = 0.0;
    for rollout in buffer.rollouts() {
        match replay_terms(candidate, rollout, world) {
            Ok(t) => total += t.weighted(config.kappa_r, config.kappa_rot),
            Err(_) => return f64::INFINITY,
        }
    }
    total
}

/// Per-parameter Gaussian over [`PhysParams`], indexed by [`ParamKind`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDist {
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

impl ParamDist {
    pub fn mean_params(&self) -> PhysParams {
        PhysParams::from_array(self.mean)
    }

    /// Pins every parameter outside `optimized` to `nominal` with zero spread.
    pub fn restrict(mut self, optimized: &[ParamKind], nominal: &PhysParams) -> Self {
        for kind in ParamKind::ALL {
            if !optimized.contains(&kind) {
                self.mean[kind.index()] = nominal.get(kind);
                self.std[kind.index()] = 0.0;
            }
        }
        self
    }
}

/// Prior around `nominal`: each mean is drawn uniformly from
/// `[theta - delta*theta, theta + delta*theta]`, and the spread is
/// `(theta + delta*theta - max(1e-7, theta - delta*theta))^2 / 16`.
pub fn init_prior<R: Rng + ?Sized>(nominal: &PhysParams, delta: f64, rng: &mut R) -> ParamDist {
    let values = nominal.to_array();
    let mut mean = [0.0; 4];
    let mut std = [0.0; 4];
    for (i, &theta) in values.iter().enumerate() {
        let lo = theta - delta * theta;
        let hi = theta + delta * theta;
        let u: f64 = rng.random();
        mean[i] = if hi > lo { (lo + u * (hi - lo)).max(PARAM_FLOOR) } else { theta };
        std[i] = (hi - lo.max(PARAM_FLOOR)).max(0.0).powi(2) / 16.0;
    }
    ParamDist { mean, std }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    pub population: usize,
    pub iterations: usize,
    pub elite_fraction: f64,
    pub kappa_r: f64,
    pub kappa_rot: f64,
    pub optimized: Vec<ParamKind>,
    pub delta: f64,
    /// Carry elites across CEM iterations (non-increasing best cost).
    pub keep_elites: bool,
    /// Start every episode's optimization from the prior instead of the
    /// previous episode's refit distribution.
    pub reset_to_prior: bool,
    /// Std of additive Gaussian noise on recorded observations, m / rad.
    pub observation_noise: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            population: 32,
            iterations: 2,
            elite_fraction: 0.2,
            kappa_r: 0.1,
            kappa_rot: 2e-2,
            optimized: vec![ParamKind::Sliding, ParamKind::Torsional, ParamKind::Rolling],
            delta: 1.0,
            keep_elites: true,
            reset_to_prior: false,
            observation_noise: 0.0,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<(), AdaptError> {
        if self.iterations == 0 {
            return Err(AdaptError::InvalidConfig("iterations must be >= 1".into()));
        }
        if (self.elite_fraction * self.population as f64).floor() < 1.0 {
            return Err(AdaptError::InvalidConfig(format!(
                "elite set is empty: floor({} * {}) < 1",
                self.elite_fraction, self.population
            )));
        }
        if !(self.delta >= 0.0) {
            return Err(AdaptError::InvalidConfig("delta must be non-negative".into()));
        }
        Ok(())
    }

    fn elite_count(&self) -> usize {
        crate::planner::elite_count(self.population, self.elite_fraction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptIteration {
    pub best_cost: f64,
    pub elite_mean_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptOutcome {
    pub best_params: PhysParams,
    pub best_cost: f64,
    pub dist: ParamDist,
    pub iterations: Vec<AdaptIteration>,
    /// Set when no candidate produced a finite cost; `dist` is then the input.
    pub warning: bool,
}

/// Draws candidate `index` of `iteration`; non-optimized entries are the
/// mean verbatim.
pub fn sample_candidate(dist: &ParamDist, optimized: &[ParamKind], seed: u64, iteration: usize, index: usize) -> PhysParams {
    let mut rng = seed::stream(seed, &[iteration as u64, index as u64]);
    let mut values = dist.mean;
    for kind in ParamKind::ALL {
        let z: f64 = rng.sample(StandardNormal);
        if optimized.contains(&kind) {
            let i = kind.index();
            values[i] = dist.mean[i] + dist.std[i] * z;
        }
    }
    PhysParams::from_array(values)
}

/// CEM over parameters against an arbitrary cost.
pub fn optimize_with<F>(dist: &ParamDist, config: &AdaptConfig, seed: u64, cost: F) -> Result<AdaptOutcome, AdaptError>
where
    F: Fn(&PhysParams) -> f64 + Sync,
{
    config.validate()?;
    let n_elite = config.elite_count();
    let mut current = *dist;
    let mut carried: Vec<(PhysParams, f64)> = Vec::new();
    let mut best: Option<(PhysParams, f64)> = None;
    let mut history = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let candidates: Vec<PhysParams> = (0..config.population)
            .map(|i| sample_candidate(&current, &config.optimized, seed, it, i))
            .collect();
        let costs: Vec<f64> = candidates.par_iter().map(&cost).collect();
        let mut pool: Vec<(PhysParams, f64)> = candidates.into_iter().zip(costs).collect();
        if config.keep_elites {
            pool.append(&mut carried);
        }
        let order = rank(pool.iter().map(|(_, c)| *c));
        if order.is_empty() {
            warn!("parameter CEM iteration {it}: no finite candidate cost");
            break;
        }
        let elites: Vec<usize> = order.into_iter().take(n_elite).collect();
        let leader = pool[elites[0]];
        if best.is_none_or(|(_, c)| leader.1 < c) {
            best = Some(leader);
        }
        let n = elites.len() as f64;
        let mut refit = ParamDist {
            mean: [0.0; 4],
            std: [0.0; 4],
        };
        for i in 0..4 {
            let mean = elites.iter().map(|&e| pool[e].0.to_array()[i]).sum::<f64>() / n;
            let var = elites
                .iter()
                .map(|&e| (pool[e].0.to_array()[i] - mean).powi(2))
                .sum::<f64>()
                / n;
            refit.mean[i] = mean;
            refit.std[i] = var.sqrt();
        }
        for kind in ParamKind::ALL {
            if !config.optimized.contains(&kind) {
                refit.mean[kind.index()] = current.mean[kind.index()];
                refit.std[kind.index()] = current.std[kind.index()];
            }
        }
        let elite_mean_cost = elites.iter().map(|&e| pool[e].1).sum::<f64>() / n;
        debug!("parameter CEM iteration {it}: best {:.6e} elite mean {:.6e}", leader.1, elite_mean_cost);
        history.push(AdaptIteration {
            best_cost: leader.1,
            elite_mean_cost,
        });
        carried = elites.iter().map(|&e| pool[e]).collect();
        current = refit;
    }
    Ok(match best {
        Some((params, cost)) => AdaptOutcome {
            best_params: params,
            best_cost: cost,
            dist: current,
            iterations: history,
            warning: false,
        },
        None => AdaptOutcome {
            best_params: dist.mean_params(),
            best_cost: f64::INFINITY,
            dist: *dist,
            iterations: history,
            warning: true,
        },
    })
}

/// CEM over parameters against the replay mismatch of the whole buffer.
pub fn optimize(
    buffer: &ReplayBuffer,
    dist: &ParamDist,
    config: &AdaptConfig,
    world: &WorldConfig,
    seed: u64,
) -> Result<AdaptOutcome, AdaptError> {
    if buffer.is_empty() {
        return Err(AdaptError::EmptyBuffer);
    }
    optimize_with(dist, config, seed, |p| replay_cost(p, buffer, world, config))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BufferFile {
    format: String,
    version: u32,
    rollouts: Vec<RolloutRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RolloutRecord {
    mode: ControlMode,
    dt: f64,
    initial_state: SimState,
    steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StepRecord {
    t: f64,
    control: [f64; 2],
    pusher: [f64; 2],
    object: [f64; 3],
}

impl ReplayBuffer {
    pub fn to_json(&self) -> Result<String, AdaptError> {
        let file = BufferFile {
            format: BUFFER_FORMAT.into(),
            version: BUFFER_VERSION,
            rollouts: self
                .rollouts
                .iter()
                .map(|r| RolloutRecord {
                    mode: r.mode,
                    dt: r.dt,
                    initial_state: r.initial_state.clone(),
                    steps: (0..r.duration_steps())
                        .map(|k| StepRecord {
                            t: r.initial_state.time + (k + 1) as f64 * r.dt,
                            control: [r.controls[k].x, r.controls[k].y],
                            pusher: [r.observed_pusher[k].x, r.observed_pusher[k].y],
                            object: [r.observed_object[k].x, r.observed_object[k].y, r.observed_yaw[k]],
                        })
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, AdaptError> {
        let file: BufferFile = serde_json::from_str(text)?;
        if file.format != BUFFER_FORMAT {
            return Err(AdaptError::Format(format!("unexpected format tag {:?}", file.format)));
        }
        if file.version != BUFFER_VERSION {
            return Err(AdaptError::Format(format!("unsupported version {}", file.version)));
        }
        let mut buffer = ReplayBuffer::new();
        for rec in file.rollouts {
            let mut r = Rollout::new(rec.initial_state, rec.mode, rec.dt);
            for s in rec.steps {
                r.controls.push(Vec2::new(s.control[0], s.control[1]));
                r.observed_pusher.push(Vec2::new(s.pusher[0], s.pusher[1]));
                r.observed_object.push(Vec2::new(s.object[0], s.object[1]));
                r.observed_yaw.push(s.object[2]);
            }
            buffer.append(r)?;
        }
        Ok(buffer)
    }

    pub fn save(&self, path: &Path) -> Result<(), AdaptError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AdaptError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
