//! Planar non-prehensile pushing with sampling-based MPC and few-shot
//! adaptation of the physics model.
//!
//! * [`physics`]: disc pusher / box slider engine with regularized friction.
//! * [`minsnap`]: minimum-snap interpolation of position+velocity keypoints.
//! * [`planner`]: iCEM-style MPC over keypoint sequences.
//! * [`adapt`]: replay buffer and CEM identification of friction/mass.
//! * [`metrics`]: success rate, execution time, object loss, path lengths.
//! * [`harness`]: episodes, experiments and report files.

pub mod adapt;
pub mod control;
pub mod harness;
pub mod metrics;
pub mod minsnap;
pub mod physics;
pub mod planner;
pub mod seed;

pub use adapt::{AdaptConfig, ParamDist, ReplayBuffer, Rollout};
pub use control::{ControlConfig, ControlMode};
pub use minsnap::{BoundaryState, Keypoint, KeypointSequence, Trajectory};
pub use physics::{BodyState, ParamKind, PhysParams, SimState, Vec2, World, WorldConfig};
pub use planner::{PlannerConfig, TaskSpec, Termination};
