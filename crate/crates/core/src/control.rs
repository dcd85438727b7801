//! Trajectory tracking on top of the physics engine.

use serde::{Deserialize, Serialize};

use crate::minsnap::TrajectorySample;
use crate::physics::{BodyState, Control, PidController, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// PID force on the dynamic pusher; forces are recorded and replayed.
    #[default]
    Force,
    /// Reference velocity plus proportional position correction, imposed
    /// kinematically; velocities are recorded and replayed.
    Velocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub mode: ControlMode,
    pub kp: f64,
    pub kd: f64,
    pub ki: f64,
    pub max_force: Option<f64>,
    /// Position feedback gain of the velocity-mode tracker, 1/s.
    pub velocity_gain: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            mode: ControlMode::Force,
            kp: 400.0,
            kd: 40.0,
            ki: 0.0,
            max_force: None,
            velocity_gain: 20.0,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Tracker {
    Force(PidController),
    Velocity { gain: f64 },
}

impl Tracker {
    pub fn new(config: &ControlConfig, dt: f64) -> Self {
        match config.mode {
            ControlMode::Force => {
                let mut pid = PidController::new(config.kp, config.kd, config.ki, dt);
                pid.max_force = config.max_force;
                Tracker::Force(pid)
            }
            ControlMode::Velocity => Tracker::Velocity {
                gain: config.velocity_gain,
            },
        }
    }

    /// Clears controller memory; called whenever a new trajectory starts.
    pub fn reset(&mut self) {
        if let Tracker::Force(pid) = self {
            pid.reset();
        }
    }

    pub fn command(&mut self, reference: &TrajectorySample, pusher: &BodyState) -> Control {
        match self {
            Tracker::Force(pid) => Control::Force(pid.force(reference.position, reference.velocity, pusher)),
            Tracker::Velocity { gain } => {
                let v: Vec2 = reference.velocity + (reference.position - pusher.position) * *gain;
                Control::Velocity(v)
            }
        }
    }
}
