//! Sampling-based MPC over minimum-snap keypoint sequences (iCEM flavour).
//!
//! Each plan call runs `iterations` rounds of: sample a population of
//! keypoint sequences around the current distribution (colored noise along
//! the keypoint index), roll each one out in closed loop through a duplicate
//! of the dynamics model, score the final state, and refit the distribution
//! to the elite set. Elites are carried into the next round, and the final
//! mean is shifted one keypoint forward to warm-start the next call.

pub mod noise;

pub use noise::powerlaw_noise;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlConfig, Tracker};
use crate::minsnap::{BoundaryState, Keypoint, KeypointSequence, MinSnapError, MinSnapSolver, Trajectory};
use crate::physics::{BodyState, Control, PhysicsError, SimState, Vec2, World};
use crate::seed;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    MinSnap(#[from] MinSnapError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("every candidate diverged or had non-finite cost")]
    AllDiverged,
}

/// Target pose, cost weights and termination thresholds of one pushing task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    pub target_position: Vec2,
    pub target_yaw: f64,
    pub lambda_rot: f64,
    pub lambda_prox: f64,
    pub lambda_acc: f64,
    pub epsilon: f64,
    pub time_limit: f64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            target_position: Vec2::zeros(),
            target_yaw: 0.0,
            lambda_rot: 2e-2,
            lambda_prox: 5e-4,
            lambda_acc: 1e-5,
            epsilon: 1e-3,
            time_limit: 5.0,
        }
    }
}

impl TaskSpec {
    pub fn new(target_position: Vec2, target_yaw: f64) -> Self {
        Self {
            target_position,
            target_yaw,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let weights = [self.lambda_rot, self.lambda_prox, self.lambda_acc];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(PlanError::InvalidConfig("task weights must be non-negative".into()));
        }
        if !(self.epsilon > 0.0 && self.time_limit > 0.0) {
            return Err(PlanError::InvalidConfig("epsilon and time_limit must be positive".into()));
        }
        Ok(())
    }

    /// Squared distance of the object to the target position.
    pub fn position_loss(&self, object: &BodyState) -> f64 {
        (object.position - self.target_position).norm_squared()
    }

    /// `sin^2` of the yaw error; invariant under half turns of the box.
    pub fn rotation_loss(&self, object: &BodyState) -> f64 {
        (object.yaw - self.target_yaw).sin().powi(2)
    }

    /// Position loss plus weighted rotation loss: the termination criterion.
    pub fn goal_loss(&self, object: &BodyState) -> f64 {
        self.position_loss(object) + self.lambda_rot * self.rotation_loss(object)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Running,
    Success,
    Timeout,
}

pub fn terminal_check(state: &SimState, t: f64, task: &TaskSpec) -> Termination {
    if t >= task.time_limit {
        Termination::Timeout
    } else if task.goal_loss(state.object()) < task.epsilon {
        Termination::Success
    } else {
        Termination::Running
    }
}

/// Box bounds applied to every sampled keypoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub min: Vec2,
    pub max: Vec2,
    pub max_speed: f64,
}

impl Workspace {
    pub fn centered(center: Vec2, half_extent: f64, max_speed: f64) -> Self {
        let h = Vec2::new(half_extent, half_extent);
        Self {
            min: center - h,
            max: center + h,
            max_speed,
        }
    }

    pub fn unbounded() -> Self {
        Self {
            min: Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
            max: Vec2::new(f64::INFINITY, f64::INFINITY),
            max_speed: f64::INFINITY,
        }
    }

    pub fn clip(&self, kp: [f64; 4]) -> [f64; 4] {
        [
            kp[0].clamp(self.min.x, self.max.x),
            kp[1].clamp(self.min.y, self.max.y),
            kp[2].clamp(-self.max_speed, self.max_speed),
            kp[3].clamp(-self.max_speed, self.max_speed),
        ]
    }

    pub fn contains(&self, kp: &Keypoint) -> bool {
        kp.position.x >= self.min.x
            && kp.position.x <= self.max.x
            && kp.position.y >= self.min.y
            && kp.position.y <= self.max.y
            && kp.velocity.x.abs() <= self.max_speed
            && kp.velocity.y.abs() <= self.max_speed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub population: usize,
    pub iterations: usize,
    pub keypoints: usize,
    pub elite_fraction: f64,
    pub noise_exponent: f64,
    pub init_std_pos: f64,
    pub init_std_vel: f64,
    pub replan_period: f64,
    pub planning_horizon: f64,
    /// Carry the previous iteration's elites into the next population.
    pub keep_elites: bool,
    /// Half side of the square keypoint region around the object start, m.
    pub workspace_half_extent: f64,
    pub max_keypoint_speed: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            population: 64,
            iterations: 4,
            keypoints: 2,
            elite_fraction: 0.2,
            noise_exponent: 2.0,
            init_std_pos: 0.1,
            init_std_vel: 0.2,
            replan_period: 0.05,
            planning_horizon: 0.6,
            keep_elites: true,
            workspace_half_extent: 0.5,
            max_keypoint_speed: 0.5,
        }
    }
}

impl PlannerConfig {
    pub fn segment_duration(&self) -> f64 {
        self.planning_horizon / self.keypoints as f64
    }

    pub fn elite_count(&self) -> usize {
        elite_count(self.population, self.elite_fraction)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.iterations == 0 || self.keypoints == 0 {
            return Err(PlanError::InvalidConfig("iterations and keypoints must be >= 1".into()));
        }
        if (self.elite_fraction * self.population as f64).floor() < 1.0 {
            return Err(PlanError::InvalidConfig(format!(
                "elite set is empty: floor({} * {}) < 1",
                self.elite_fraction, self.population
            )));
        }
        if !(self.planning_horizon > 0.0 && self.replan_period > 0.0) {
            return Err(PlanError::InvalidConfig("horizon and replan period must be positive".into()));
        }
        if !(self.init_std_pos >= 0.0 && self.init_std_vel >= 0.0) {
            return Err(PlanError::InvalidConfig("initial stds must be non-negative".into()));
        }
        Ok(())
    }
}

/// `floor(fraction * population)`, at least one.
pub fn elite_count(population: usize, fraction: f64) -> usize {
    ((fraction * population as f64).floor() as usize).max(1)
}

/// Diagonal Gaussian over keypoint sequences; each row is `[px, py, vx, vy]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingDist {
    pub means: Vec<[f64; 4]>,
    pub stds: Vec<[f64; 4]>,
}

impl SamplingDist {
    pub fn new(means: Vec<[f64; 4]>, pos_std: f64, vel_std: f64) -> Self {
        let stds = vec![[pos_std, pos_std, vel_std, vel_std]; means.len()];
        Self { means, stds }
    }

    pub fn keypoints(&self) -> usize {
        self.means.len()
    }

    pub fn mean_sequence(&self, segment_duration: f64) -> KeypointSequence {
        to_sequence(&self.means, segment_duration)
    }

    /// Drops the first keypoint and repeats the last one.
    pub fn shifted_means(&self) -> Vec<[f64; 4]> {
        let mut means: Vec<_> = self.means.iter().skip(1).copied().collect();
        let last = *self.means.last().expect("non-empty distribution");
        means.push(last);
        means
    }
}

fn to_sequence(rows: &[[f64; 4]], segment_duration: f64) -> KeypointSequence {
    KeypointSequence::new(rows.iter().map(|r| Keypoint::from_array(*r)).collect(), segment_duration)
}

fn to_rows(seq: &KeypointSequence) -> Vec<[f64; 4]> {
    seq.keypoints.iter().map(Keypoint::to_array).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub keypoint_sequence: KeypointSequence,
    pub cost: f64,
}

/// Samples `population` keypoint sequences for one iteration.
///
/// Candidate `i` of iteration `iteration` draws from its own stream keyed by
/// `(seed, iteration, i)`.
pub fn sample_population(
    dist: &SamplingDist,
    config: &PlannerConfig,
    workspace: &Workspace,
    seed: u64,
    iteration: usize,
) -> Vec<KeypointSequence> {
    let m = dist.keypoints();
    let segment = config.segment_duration();
    (0..config.population)
        .map(|i| {
            let mut rng = seed::stream(seed, &[iteration as u64, i as u64]);
            let noise: [Vec<f64>; 4] = std::array::from_fn(|_| powerlaw_noise(config.noise_exponent, m, &mut rng));
            let rows: Vec<[f64; 4]> = (0..m)
                .map(|j| {
                    let raw: [f64; 4] =
                        std::array::from_fn(|d| dist.means[j][d] + dist.stds[j][d] * noise[d][j]);
                    workspace.clip(raw)
                })
                .collect();
            to_sequence(&rows, segment)
        })
        .collect()
}

/// Per-step record of a closed-loop model rollout.
#[derive(Debug, Clone)]
pub struct RolloutTrace {
    pub trajectory: Trajectory,
    pub controls: Vec<Control>,
    /// States after each step; `states.len() == controls.len()`.
    pub states: Vec<SimState>,
}

/// Tracks the minimum-snap trajectory through `candidate` with the
/// configured controller for `M * T / dt` steps on a duplicate of `model`.
pub fn rollout(
    model: &World,
    start: &BoundaryState,
    candidate: &KeypointSequence,
    control: &ControlConfig,
) -> Result<RolloutTrace, PlanError> {
    let solver = MinSnapSolver::new(candidate.len(), candidate.segment_duration)?;
    let trajectory = solver.solve(start, &candidate.keypoints)?;
    let mut world = model.clone();
    let mut tracker = Tracker::new(control, world.dt());
    let steps = step_count(trajectory.total_duration(), world.dt());
    let mut controls = Vec::with_capacity(steps);
    let mut states = Vec::with_capacity(steps);
    for k in 0..steps {
        let reference = trajectory.sample(k as f64 * world.dt());
        let u = tracker.command(&reference, &world.state().pusher);
        controls.push(u);
        states.push(world.apply(u)?.clone());
    }
    Ok(RolloutTrace {
        trajectory,
        controls,
        states,
    })
}

pub(crate) fn step_count(duration: f64, dt: f64) -> usize {
    (duration / dt).round() as usize
}

/// Task cost of a rollout given its final state and the mean squared
/// planned acceleration.
pub fn candidate_cost(final_state: &SimState, mean_sq_accel: f64, task: &TaskSpec) -> f64 {
    let object = final_state.object();
    task.position_loss(object)
        + task.lambda_rot * task.rotation_loss(object)
        + task.lambda_prox * (object.position - final_state.pusher.position).norm_squared()
        + task.lambda_acc * mean_sq_accel
}

/// Cost of a full trace: the planned accelerations are sampled at every
/// control instant including the terminal one.
pub fn trace_cost(trace: &RolloutTrace, dt: f64, task: &TaskSpec) -> f64 {
    let last = trace.states.last().expect("non-empty rollout");
    candidate_cost(last, trace.trajectory.mean_squared_acceleration(dt), task)
}

/// Refits the distribution to the `elites` lowest-cost candidates, ties
/// broken by candidate index. Returns the new distribution and the elite
/// indices in rank order.
pub fn refit_elites(candidates: &[Candidate], elites: usize) -> Result<(SamplingDist, Vec<usize>), PlanError> {
    let order = rank(candidates.iter().map(|c| c.cost));
    if order.is_empty() {
        return Err(PlanError::AllDiverged);
    }
    let chosen: Vec<usize> = order.into_iter().take(elites.max(1)).collect();
    let rows: Vec<Vec<[f64; 4]>> = chosen
        .iter()
        .map(|&i| to_rows(&candidates[i].keypoint_sequence))
        .collect();
    let m = rows[0].len();
    let n = rows.len() as f64;
    let mut means = vec![[0.0; 4]; m];
    let mut stds = vec![[0.0; 4]; m];
    for j in 0..m {
        for d in 0..4 {
            let mean = rows.iter().map(|r| r[j][d]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j][d] - mean).powi(2)).sum::<f64>() / n;
            means[j][d] = mean;
            stds[j][d] = var.sqrt();
        }
    }
    Ok((SamplingDist { means, stds }, chosen))
}

/// Indices of finite costs in ascending order, ties by index.
pub(crate) fn rank(costs: impl Iterator<Item = f64>) -> Vec<usize> {
    let costs: Vec<f64> = costs.collect();
    let mut order: Vec<usize> = (0..costs.len()).filter(|&i| costs[i].is_finite()).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub best_cost: f64,
    pub mean_cost: f64,
    pub elite_mean_cost: f64,
}

#[derive(Debug, Clone)]
pub struct IcemOutcome {
    pub best: Candidate,
    pub final_dist: SamplingDist,
    pub iterations: Vec<IterationStats>,
    /// Number of cost evaluations performed.
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub best_sequence: KeypointSequence,
    pub best_first_keypoint: Keypoint,
    pub best_cost: f64,
    pub iterations: Vec<IterationStats>,
    pub rollouts: usize,
}

/// Runs the iCEM loop from `dist` against an arbitrary sequence cost.
/// `eval` returns `None` for candidates that could not be evaluated.
pub fn icem<F>(
    config: &PlannerConfig,
    mut dist: SamplingDist,
    workspace: &Workspace,
    seed: u64,
    eval: F,
) -> Result<IcemOutcome, PlanError>
where
    F: Fn(&KeypointSequence) -> Option<f64> + Sync,
{
    config.validate()?;
    let n_elite = config.elite_count();
    let mut carried: Vec<Candidate> = Vec::new();
    let mut best: Option<Candidate> = None;
    let mut stats = Vec::with_capacity(config.iterations);
    let mut evaluations = 0;
    for it in 0..config.iterations {
        let samples = sample_population(&dist, config, workspace, seed, it);
        let costs: Vec<f64> = samples
            .par_iter()
            .map(|s| eval(s).filter(|c| c.is_finite()).unwrap_or(f64::INFINITY))
            .collect();
        evaluations += samples.len();
        let mut pool: Vec<Candidate> = samples
            .into_iter()
            .zip(costs)
            .map(|(keypoint_sequence, cost)| Candidate { keypoint_sequence, cost })
            .collect();
        let finite: Vec<f64> = pool.iter().map(|c| c.cost).filter(|c| c.is_finite()).collect();
        if config.keep_elites {
            pool.append(&mut carried);
        }
        let (refit, elite_idx) = match refit_elites(&pool, n_elite) {
            Ok(r) => r,
            Err(_) if best.is_some() => break,
            Err(e) => return Err(e),
        };
        let leader = &pool[elite_idx[0]];
        if best.as_ref().is_none_or(|b| leader.cost < b.cost) {
            best = Some(leader.clone());
        }
        let it_stats = IterationStats {
            best_cost: leader.cost,
            mean_cost: if finite.is_empty() {
                f64::INFINITY
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            },
            elite_mean_cost: elite_idx.iter().map(|&i| pool[i].cost).sum::<f64>() / elite_idx.len() as f64,
        };
        debug!(
            "icem iteration {it}: best {:.6e} mean {:.6e} elite {:.6e}",
            it_stats.best_cost, it_stats.mean_cost, it_stats.elite_mean_cost
        );
        stats.push(it_stats);
        carried = elite_idx.iter().map(|&i| pool[i].clone()).collect();
        dist = refit;
    }
    Ok(IcemOutcome {
        best: best.ok_or(PlanError::AllDiverged)?,
        final_dist: dist,
        iterations: stats,
        evaluations,
    })
}

/// Stateful MPC planner: owns the warm-start mean between calls.
#[derive(Debug, Clone)]
pub struct Planner {
    config: PlannerConfig,
    control: ControlConfig,
    solver: MinSnapSolver,
    warm_start: Option<Vec<[f64; 4]>>,
}

impl Planner {
    pub fn new(config: PlannerConfig, control: ControlConfig) -> Result<Self, PlanError> {
        config.validate()?;
        let solver = MinSnapSolver::new(config.keypoints, config.segment_duration())?;
        Ok(Self {
            config,
            control,
            solver,
            warm_start: None,
        })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn reset(&mut self) {
        self.warm_start = None;
    }

    /// Overrides the mean used by the next call.
    pub fn set_warm_start(&mut self, means: Vec<[f64; 4]>) {
        self.warm_start = Some(means);
    }

    fn initial_dist(&self, start: &BoundaryState) -> SamplingDist {
        let means = self.warm_start.clone().unwrap_or_else(|| {
            vec![[start.position.x, start.position.y, 0.0, 0.0]; self.config.keypoints]
        });
        SamplingDist::new(means, self.config.init_std_pos, self.config.init_std_vel)
    }

    /// Plans from the synced `model`, starting the reference trajectory at
    /// `start`. Returns the best sequence and its first keypoint.
    pub fn plan(
        &mut self,
        model: &World,
        start: &BoundaryState,
        task: &TaskSpec,
        workspace: &Workspace,
        seed: u64,
    ) -> Result<PlanOutcome, PlanError> {
        task.validate()?;
        let dist = self.initial_dist(start);
        let dt = model.dt();
        let steps = step_count(self.config.planning_horizon, dt);
        let solver = &self.solver;
        let control = &self.control;
        let eval = |seq: &KeypointSequence| -> Option<f64> {
            let trajectory = solver.solve(start, &seq.keypoints).ok()?;
            let mut world = model.clone();
            let mut tracker = Tracker::new(control, dt);
            let mut acc = 0.0;
            for k in 0..steps {
                let reference = trajectory.sample(k as f64 * dt);
                acc += reference.acceleration.norm_squared();
                let u = tracker.command(&reference, &world.state().pusher);
                world.apply(u).ok()?;
            }
            acc += trajectory.sample(steps as f64 * dt).acceleration.norm_squared();
            Some(candidate_cost(world.state(), acc / steps as f64, task))
        };
        let outcome = icem(&self.config, dist, workspace, seed, eval)?;
        self.warm_start = Some(outcome.final_dist.shifted_means());
        let best_sequence = outcome.best.keypoint_sequence;
        Ok(PlanOutcome {
            best_first_keypoint: best_sequence.keypoints[0],
            best_cost: outcome.best.cost,
            best_sequence,
            iterations: outcome.iterations,
            rollouts: outcome.evaluations,
        })
    }

    pub fn solver(&self) -> &MinSnapSolver {
        &self.solver
    }
}
