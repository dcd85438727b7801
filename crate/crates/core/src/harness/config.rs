use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::adapt::AdaptConfig;
use crate::control::{ControlConfig, ControlMode};
use crate::physics::{BodyState, ParamKind, PhysParams, SimState, Vec2, WorldConfig};
use crate::planner::{PlannerConfig, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Environment paused while planning, 20 Hz replanning, force replay.
    #[default]
    Sim,
    /// Environment keeps running while planning (plans land one period
    /// late), 10 Hz replanning, velocity replay.
    Realtime,
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sim" => Ok(Profile::Sim),
            "realtime" => Ok(Profile::Realtime),
            other => Err(format!("unknown profile {other:?} (expected sim or realtime)")),
        }
    }
}

/// Target object pose of one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPose {
    pub position: Vec2,
    pub yaw: f64,
}

impl TargetPose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            position: Vec2::new(x, y),
            yaw,
        }
    }

    /// Target at `radius` along `bearing` from `origin`.
    pub fn polar(origin: Vec2, radius: f64, bearing: f64, yaw: f64) -> Self {
        Self {
            position: origin + Vec2::new(bearing.cos(), bearing.sin()) * radius,
            yaw,
        }
    }
}

/// Initial poses shared by every task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scene {
    pub object_position: Vec2,
    pub object_yaw: f64,
    pub pusher_position: Vec2,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            object_position: Vec2::zeros(),
            object_yaw: 0.0,
            pusher_position: Vec2::new(-0.1, 0.0),
        }
    }
}

impl Scene {
    pub fn initial_state(&self) -> SimState {
        SimState::new(
            BodyState::at_rest(self.pusher_position, 0.0),
            vec![BodyState::at_rest(self.object_position, self.object_yaw)],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub seed: u64,
    pub runs: usize,
    pub episodes: usize,
    /// How many of `eval_targets` are executed after every episode; 0 skips
    /// task evaluation.
    pub eval_tasks: usize,
    /// How many of `validation_targets` are executed with ground-truth
    /// parameters to build the held-out replay set.
    pub validation_rollouts: usize,
    /// Environment pause during planning; `false` applies each plan one
    /// replan period after the state it was computed from.
    pub paused_planning: bool,
    /// Gaussian smoothing of trajectories before measuring lengths, samples.
    pub smoothing_sigma: f64,
    pub world: WorldConfig,
    pub env_params: PhysParams,
    pub planner: PlannerConfig,
    pub adapt: AdaptConfig,
    pub control: ControlConfig,
    /// Weights and thresholds; the target fields are overwritten per task.
    pub task: TaskSpec,
    pub scene: Scene,
    pub train_targets: Vec<TargetPose>,
    pub eval_targets: Vec<TargetPose>,
    pub validation_targets: Vec<TargetPose>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Sim, false)
    }
}

pub fn standard_eval_targets(origin: Vec2) -> Vec<TargetPose> {
    let deg = std::f64::consts::PI / 180.0;
    vec![
        TargetPose::polar(origin, 0.20, 0.0, 0.0),
        TargetPose::polar(origin, 0.15, 30.0 * deg, FRAC_PI_4),
        TargetPose::polar(origin, 0.15, -30.0 * deg, -FRAC_PI_4),
        TargetPose::polar(origin, 0.25, 15.0 * deg, FRAC_PI_2),
        TargetPose::polar(origin, 0.25, -15.0 * deg, -FRAC_PI_2),
    ]
}

impl ExperimentConfig {
    pub fn for_profile(profile: Profile, paper_scale: bool) -> Self {
        let scene = Scene::default();
        let origin = scene.object_position;
        let mut cfg = Self {
            profile,
            seed: 0,
            runs: 5,
            episodes: 10,
            eval_tasks: 5,
            validation_rollouts: 5,
            paused_planning: true,
            smoothing_sigma: 0.0,
            world: WorldConfig::default(),
            env_params: PhysParams::ground_truth(),
            planner: PlannerConfig::default(),
            adapt: AdaptConfig::default(),
            control: ControlConfig::default(),
            task: TaskSpec::default(),
            scene,
            train_targets: vec![
                TargetPose::new(0.15, 0.0, 0.0),
                TargetPose::new(0.12, 0.08, 0.3),
                TargetPose::new(0.12, -0.08, -0.3),
                TargetPose::new(0.20, 0.05, 0.0),
                TargetPose::new(0.18, -0.05, 0.4),
            ],
            eval_targets: standard_eval_targets(origin),
            validation_targets: vec![
                TargetPose::new(0.10, 0.0, 0.0),
                TargetPose::new(0.15, 0.05, 0.2),
                TargetPose::new(0.15, -0.05, -0.2),
                TargetPose::new(0.20, 0.0, 0.5),
                TargetPose::new(0.10, 0.10, 0.0),
            ],
        };
        if profile == Profile::Realtime {
            cfg.planner.population = 50;
            cfg.planner.iterations = 2;
            cfg.planner.replan_period = 0.1;
            cfg.paused_planning = false;
            cfg.control.mode = ControlMode::Velocity;
            cfg.adapt.optimized = vec![ParamKind::Sliding, ParamKind::Torsional, ParamKind::PusherMass];
            cfg.task.epsilon = 1e-4;
            cfg.smoothing_sigma = 100.0;
        }
        if paper_scale {
            cfg.runs = 10;
            cfg.episodes = 10;
            if profile == Profile::Sim {
                cfg.planner.population = 128;
            }
        }
        cfg
    }

    /// Profile defaults overlaid with the keys present in a TOML document.
    pub fn from_toml_str(text: &str, profile: Profile, paper_scale: bool) -> Result<Self, HarnessError> {
        let base = toml::Value::try_from(Self::for_profile(profile, paper_scale))
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let overlay: toml::Value = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let merged = merge(base, overlay);
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, profile: Profile, paper_scale: bool) -> Result<Self, HarnessError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?, profile, paper_scale)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::Config(msg.to_string()));
        if self.runs == 0 {
            return bad("runs must be >= 1");
        }
        if self.train_targets.is_empty() {
            return bad("train_targets must not be empty");
        }
        if self.eval_tasks > self.eval_targets.len() {
            return bad("eval_tasks exceeds the number of eval_targets");
        }
        if self.validation_rollouts > self.validation_targets.len() {
            return bad("validation_rollouts exceeds the number of validation_targets");
        }
        self.world.validate()?;
        self.planner.validate()?;
        self.adapt.validate()?;
        self.task.validate()?;
        Ok(())
    }

    pub fn task_for(&self, target: &TargetPose) -> TaskSpec {
        TaskSpec {
            target_position: target.position,
            target_yaw: target.yaw,
            ..self.task
        }
    }
}

fn merge(base: toml::Value, overlay: toml::Value) -> toml::Value {
    match (base, overlay) {
        (toml::Value::Table(mut b), toml::Value::Table(o)) => {
            for (k, v) in o {
                let merged = match b.remove(&k) {
                    Some(existing) => merge(existing, v),
                    None => v,
                };
                b.insert(k, merged);
            }
            toml::Value::Table(b)
        }
        (_, o) => o,
    }
}
