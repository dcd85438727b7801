//! Planar rigid-body simulation of a disc pusher and box-shaped sliders.
//!
//! The same engine serves as the environment (ground-truth parameters) and
//! as the MPC dynamics model (candidate parameters). All friction uses
//! tanh-regularized Coulomb laws integrated backward-Euler, so a friction
//! impulse can never reverse a velocity within one step. Support friction
//! acts at the four bottom corners of each box (equal normal load), plus a
//! torsional torque about the box centre; the coupled corner step is solved
//! as a small convex minimization with damped Newton iterations.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;

/// Lower bound applied to every physical parameter.
pub const PARAM_FLOOR: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error("invalid world configuration: {0}")]
    InvalidConfig(String),
    #[error("simulation diverged at t = {time:.4} s")]
    Diverged { time: f64, last_valid: Box<SimState> },
}

/// Identifies one entry of [`PhysParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Sliding,
    Torsional,
    Rolling,
    PusherMass,
}

impl ParamKind {
    pub const ALL: [ParamKind; 4] = [
        ParamKind::Sliding,
        ParamKind::Torsional,
        ParamKind::Rolling,
        ParamKind::PusherMass,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::Sliding => "sliding",
            ParamKind::Torsional => "torsional",
            ParamKind::Rolling => "rolling",
            ParamKind::PusherMass => "pusher_mass",
        }
    }
}

/// The adaptable parameter vector: sliding, torsional and rolling friction
/// coefficients of the object plus the pusher mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub sliding: f64,
    pub torsional: f64,
    pub rolling: f64,
    pub pusher_mass: f64,
}

impl PhysParams {
    /// Builds a parameter set, flooring every entry at [`PARAM_FLOOR`].
    pub fn new(sliding: f64, torsional: f64, rolling: f64, pusher_mass: f64) -> Self {
        Self::from_array([sliding, torsional, rolling, pusher_mass])
    }

    /// Defaults of the reference simulator: (1, 0.005, 0.0001) and a 1 kg pusher.
    pub fn ground_truth() -> Self {
        Self::new(1.0, 0.005, 1e-4, 1.0)
    }

    pub fn from_array(values: [f64; 4]) -> Self {
        let [sliding, torsional, rolling, pusher_mass] = values.map(|v| v.max(PARAM_FLOOR));
        Self {
            sliding,
            torsional,
            rolling,
            pusher_mass,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.sliding, self.torsional, self.rolling, self.pusher_mass]
    }

    pub fn get(&self, kind: ParamKind) -> f64 {
        self.to_array()[kind.index()]
    }

    pub fn with(&self, kind: ParamKind, value: f64) -> Self {
        let mut values = self.to_array();
        values[kind.index()] = value;
        Self::from_array(values)
    }

    /// Absolute error relative to `reference`, per parameter.
    pub fn relative_errors(&self, reference: &PhysParams) -> [f64; 4] {
        let (a, b) = (self.to_array(), reference.to_array());
        std::array::from_fn(|i| (a[i] - b[i]).abs() / b[i])
    }

    fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite() && *v >= PARAM_FLOOR)
    }
}

impl Default for PhysParams {
    fn default() -> Self {
        Self::ground_truth()
    }
}

/// Planar pose and twist of one body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub position: Vec2,
    pub yaw: f64,
    pub lin_velocity: Vec2,
    pub ang_velocity: f64,
}

impl BodyState {
    pub fn at_rest(position: Vec2, yaw: f64) -> Self {
        Self {
            position,
            yaw: wrap_angle(yaw),
            lin_velocity: Vec2::zeros(),
            ang_velocity: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.lin_velocity.iter().all(|v| v.is_finite())
            && self.yaw.is_finite()
            && self.ang_velocity.is_finite()
    }

    /// Reflection across the world x-axis.
    pub fn mirrored(&self) -> Self {
        Self {
            position: Vec2::new(self.position.x, -self.position.y),
            yaw: wrap_angle(-self.yaw),
            lin_velocity: Vec2::new(self.lin_velocity.x, -self.lin_velocity.y),
            ang_velocity: -self.ang_velocity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub pusher: BodyState,
    pub objects: Vec<BodyState>,
    pub time: f64,
}

impl SimState {
    pub fn new(pusher: BodyState, objects: Vec<BodyState>) -> Self {
        Self {
            pusher,
            objects,
            time: 0.0,
        }
    }

    /// The first (and in all experiments, only) object.
    pub fn object(&self) -> &BodyState {
        &self.objects[0]
    }

    pub fn is_finite(&self) -> bool {
        self.time.is_finite() && self.pusher.is_finite() && self.objects.iter().all(BodyState::is_finite)
    }

    fn validate(&self) -> Result<(), PhysicsError> {
        if self.objects.is_empty() {
            return Err(PhysicsError::InvalidConfig("state needs at least one object".into()));
        }
        if !self.is_finite() {
            return Err(PhysicsError::InvalidConfig("state has non-finite components".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub pusher_radius: f64,
    pub box_half_extents: Vec2,
    pub object_mass: f64,
    pub gravity: f64,
    pub dt: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub slip_regularization_velocity: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            pusher_radius: 0.02,
            box_half_extents: Vec2::new(0.05, 0.05),
            object_mass: 0.5,
            gravity: 9.81,
            dt: 1e-3,
            contact_stiffness: 1e4,
            contact_damping: 50.0,
            slip_regularization_velocity: 1e-3,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        let positive = [
            ("pusher_radius", self.pusher_radius),
            ("box_half_extents.x", self.box_half_extents.x),
            ("box_half_extents.y", self.box_half_extents.y),
            ("object_mass", self.object_mass),
            ("gravity", self.gravity),
            ("dt", self.dt),
            ("contact_stiffness", self.contact_stiffness),
            ("slip_regularization_velocity", self.slip_regularization_velocity),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(PhysicsError::InvalidConfig(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.contact_damping.is_finite() && self.contact_damping >= 0.0) {
            return Err(PhysicsError::InvalidConfig("contact_damping must be non-negative".into()));
        }
        Ok(())
    }

    /// Yaw moment of inertia of the uniform box.
    pub fn object_inertia(&self) -> f64 {
        let h = self.box_half_extents;
        self.object_mass * (h.x * h.x + h.y * h.y) / 3.0
    }

    /// Lever arm of the torsional friction torque: the mean half-extent.
    pub fn torsional_radius(&self) -> f64 {
        0.5 * (self.box_half_extents.x + self.box_half_extents.y)
    }
}

/// One step's worth of actuation of the pusher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum Control {
    /// External force on the pusher, in newtons.
    Force(Vec2),
    /// Pusher velocity imposed kinematically, in m/s.
    Velocity(Vec2),
}

impl Control {
    pub fn value(&self) -> Vec2 {
        match *self {
            Control::Force(v) | Control::Velocity(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Contact {
    /// Unit normal pointing from the box toward the pusher centre.
    normal: Vec2,
    /// Contact point on the box surface, world frame.
    point: Vec2,
    depth: f64,
}

fn rotate(v: Vec2, angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let wrapped = (angle + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

fn disc_box_contact(center: Vec2, radius: f64, body: &BodyState, half: Vec2) -> Option<Contact> {
    let local = rotate(center - body.position, -body.yaw);
    let inside = local.x.abs() <= half.x && local.y.abs() <= half.y;
    let (normal_local, point_local, depth) = if inside {
        let gap_x = half.x - local.x.abs();
        let gap_y = half.y - local.y.abs();
        if gap_x <= gap_y {
            let sx = if local.x >= 0.0 { 1.0 } else { -1.0 };
            (Vec2::new(sx, 0.0), Vec2::new(sx * half.x, local.y), radius + gap_x)
        } else {
            let sy = if local.y >= 0.0 { 1.0 } else { -1.0 };
            (Vec2::new(0.0, sy), Vec2::new(local.x, sy * half.y), radius + gap_y)
        }
    } else {
        let closest = Vec2::new(local.x.clamp(-half.x, half.x), local.y.clamp(-half.y, half.y));
        let offset = local - closest;
        let dist = offset.norm();
        if dist >= radius {
            return None;
        }
        (offset / dist, closest, radius - dist)
    };
    Some(Contact {
        normal: rotate(normal_local, body.yaw),
        point: body.position + rotate(point_local, body.yaw),
        depth,
    })
}

/// Solves `y + a * tanh(y / v_reg) = x` for `y`.
///
/// This is one backward-Euler step of a regularized Coulomb force of
/// magnitude `a / dt`. The map is odd and strictly increasing, so the root is
/// unique and `|y| <= |x|` with matching sign.
pub(crate) fn regularized_friction_step(x: f64, a: f64, v_reg: f64) -> f64 {
    if x == 0.0 || a <= 0.0 {
        return x;
    }
    let sign = x.signum();
    let x = x.abs();
    // tanh(20) == 1 to within f64 precision: constant-magnitude Coulomb regime.
    if x - a >= 20.0 * v_reg {
        return sign * (x - a);
    }
    let (mut lo, mut hi) = (0.0_f64, x);
    let mut y = (x - a).max(0.0);
    for _ in 0..64 {
        let th = (y / v_reg).tanh();
        let g = y + a * th - x;
        if g > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let dg = 1.0 + a * (1.0 - th * th) / v_reg;
        let mut next = y - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-16 * (1.0 + x) {
            y = next;
            break;
        }
        y = next;
    }
    sign * y
}

/// `v_reg * ln(cosh(s / v_reg))`, the potential of the regularized unit
/// Coulomb force `tanh(s / v_reg)`.
fn log_cosh_potential(s: f64, v_reg: f64) -> f64 {
    let z = (s / v_reg).abs();
    let value = if z < 1.0 {
        // cosh(z) - 1 = 2 sinh^2(z / 2) keeps precision near zero.
        (2.0 * (0.5 * z).sinh().powi(2)).ln_1p()
    } else if z < 20.0 {
        z + (-2.0 * z).exp().ln_1p() - std::f64::consts::LN_2
    } else {
        z - std::f64::consts::LN_2
    };
    v_reg * value
}

/// Backward-Euler step of regularized Coulomb friction at the box corners
/// plus a torsional torque, posed as the minimization of
/// `1/2 |x - x0|_M^2 + dt * D(x)` over `x = (vx, vy, w)`, where `D` is the
/// (convex) friction dissipation potential. Coefficients already include `dt`.
struct SupportFriction {
    mass: f64,
    inertia: f64,
    corner_coef: f64,
    torsion_coef: f64,
    r_eff: f64,
    v_reg: f64,
}

impl SupportFriction {
    fn objective(&self, v0: Vec2, w0: f64, levers: &[Vec2; 4], v: Vec2, w: f64) -> f64 {
        let mut phi = 0.5 * self.mass * (v - v0).norm_squared() + 0.5 * self.inertia * (w - w0).powi(2);
        for r in levers {
            let u = v + Vec2::new(-r.y, r.x) * w;
            phi += self.corner_coef * log_cosh_potential(u.norm(), self.v_reg);
        }
        phi + self.torsion_coef / self.r_eff * log_cosh_potential(w * self.r_eff, self.v_reg)
    }

    fn solve(&self, v0: Vec2, w0: f64, levers: &[Vec2; 4]) -> (Vec2, f64) {
        if v0 == Vec2::zeros() && w0 == 0.0 {
            return (v0, w0);
        }
        let (mut v, mut w) = (v0, w0);
        let mut phi = self.objective(v0, w0, levers, v, w);
        let tol = 1e-13 * (1.0 + v0.amax() + w0.abs() * self.r_eff);
        for _ in 0..100 {
            let mut grad = Vector3::new(self.mass * (v.x - v0.x), self.mass * (v.y - v0.y), self.inertia * (w - w0));
            let mut hess = Matrix3::from_diagonal(&Vector3::new(self.mass, self.mass, self.inertia));
            for r in levers {
                let arm = Vec2::new(-r.y, r.x);
                let u = v + arm * w;
                let s = u.norm();
                let th = (s / self.v_reg).tanh();
                let radial = self.corner_coef * (1.0 - th * th) / self.v_reg;
                // tanh(s / v_reg) / s, finite as s -> 0.
                let tangential = if s > 1e-8 * self.v_reg {
                    self.corner_coef * th / s
                } else {
                    self.corner_coef / self.v_reg
                };
                // Local Hessian L = t I + (r - t) n n^T, mapped through J = [I | arm].
                let n = if s > 0.0 { u / s } else { Vec2::zeros() };
                let extra = radial - tangential;
                let (lxx, lxy, lyy) = (
                    tangential + extra * n.x * n.x,
                    extra * n.x * n.y,
                    tangential + extra * n.y * n.y,
                );
                let la = Vec2::new(lxx * arm.x + lxy * arm.y, lxy * arm.x + lyy * arm.y);
                let g = u * tangential;
                grad.x += g.x;
                grad.y += g.y;
                grad.z += arm.dot(&g);
                hess.m11 += lxx;
                hess.m12 += lxy;
                hess.m21 += lxy;
                hess.m22 += lyy;
                hess.m13 += la.x;
                hess.m31 += la.x;
                hess.m23 += la.y;
                hess.m32 += la.y;
                hess.m33 += arm.dot(&la);
            }
            let th = (w * self.r_eff / self.v_reg).tanh();
            grad.z += self.torsion_coef * th;
            hess.m33 += self.torsion_coef * self.r_eff * (1.0 - th * th) / self.v_reg;

            let Some(chol) = hess.cholesky() else {
                break;
            };
            let step = chol.solve(&(-grad));
            let size = step.x.abs().max(step.y.abs()).max(step.z.abs() * self.r_eff);
            if size <= tol {
                v += Vec2::new(step.x, step.y);
                w += step.z;
                break;
            }
            let slope = grad.dot(&step);
            if !(slope < 0.0) {
                break;
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let (vn, wn) = (v + Vec2::new(step.x, step.y) * alpha, w + step.z * alpha);
                let trial = self.objective(v0, w0, levers, vn, wn);
                if trial <= phi + 1e-4 * alpha * slope {
                    accepted = Some((vn, wn, trial));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((vn, wn, trial)) = accepted else {
                break;
            };
            let moved = (vn - v).amax().max((wn - w).abs() * self.r_eff);
            v = vn;
            w = wn;
            phi = trial;
            if moved <= tol {
                break;
            }
        }
        (v, w)
    }
}

/// A simulation instance. Cloning yields an independent duplicate whose
/// future trajectory is bit-identical under identical inputs.
#[derive(Debug, Clone)]
pub struct World {
    config: WorldConfig,
    params: PhysParams,
    state: SimState,
    inertia: f64,
    torsional_radius: f64,
}

impl World {
    pub fn new(config: WorldConfig, params: PhysParams, initial: SimState) -> Result<Self, PhysicsError> {
        config.validate()?;
        if !params.is_valid() {
            return Err(PhysicsError::InvalidConfig(format!("invalid parameters {params:?}")));
        }
        initial.validate()?;
        Ok(Self {
            inertia: config.object_inertia(),
            torsional_radius: config.torsional_radius(),
            config,
            params,
            state: initial,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    pub fn set_params(&mut self, params: PhysParams) -> Result<(), PhysicsError> {
        if !params.is_valid() {
            return Err(PhysicsError::InvalidConfig(format!("invalid parameters {params:?}")));
        }
        self.params = params;
        Ok(())
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn snapshot(&self) -> SimState {
        self.state.clone()
    }

    pub fn sync(&mut self, state: &SimState) -> Result<(), PhysicsError> {
        state.validate()?;
        self.state.clone_from(state);
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn apply(&mut self, control: Control) -> Result<&SimState, PhysicsError> {
        match control {
            Control::Force(force) => self.step(force),
            Control::Velocity(velocity) => self.step_kinematic(velocity),
        }
    }

    /// Advances one step with an external force on the dynamic pusher.
    pub fn step(&mut self, pusher_force: Vec2) -> Result<&SimState, PhysicsError> {
        self.advance(pusher_force, None)
    }

    /// Advances one step with the pusher velocity imposed. The pusher then
    /// behaves as an infinitely massive body: contact does not perturb it.
    pub fn step_kinematic(&mut self, pusher_velocity: Vec2) -> Result<&SimState, PhysicsError> {
        self.advance(Vec2::zeros(), Some(pusher_velocity))
    }

    fn advance(&mut self, force: Vec2, imposed: Option<Vec2>) -> Result<&SimState, PhysicsError> {
        let cfg = &self.config;
        let params = &self.params;
        let dt = cfg.dt;
        let v_reg = cfg.slip_regularization_velocity;
        let object_mass = cfg.object_mass;
        let inertia = self.inertia;

        let prev = &self.state;
        let mut next = prev.clone();
        let inv_pusher_mass = if imposed.is_some() {
            0.0
        } else {
            1.0 / params.pusher_mass
        };
        let mut pusher_vel = match imposed {
            Some(v) => v,
            None => prev.pusher.lin_velocity + force * (dt / params.pusher_mass),
        };

        for (before, body) in prev.objects.iter().zip(next.objects.iter_mut()) {
            let Some(contact) = disc_box_contact(prev.pusher.position, cfg.pusher_radius, before, cfg.box_half_extents)
            else {
                continue;
            };
            let lever = contact.point - before.position;
            let point_vel = |lin: Vec2, ang: f64| lin + Vec2::new(-lever.y, lever.x) * ang;

            // Normal spring-damper evaluated on the start-of-step state.
            let rel = prev.pusher.lin_velocity - point_vel(before.lin_velocity, before.ang_velocity);
            let normal_speed = rel.dot(&contact.normal);
            let normal_force =
                (cfg.contact_stiffness * contact.depth - cfg.contact_damping * normal_speed).max(0.0);
            if normal_force == 0.0 {
                continue;
            }
            let impulse = contact.normal * (normal_force * dt);
            pusher_vel += impulse * inv_pusher_mass;
            body.lin_velocity -= impulse / object_mass;
            body.ang_velocity -= cross(lever, impulse) / inertia;

            // Tangential Coulomb friction with the sliding coefficient.
            let tangent = Vec2::new(-contact.normal.y, contact.normal.x);
            let lever_t = cross(lever, tangent);
            let slip = (pusher_vel - point_vel(body.lin_velocity, body.ang_velocity)).dot(&tangent);
            let inv_eff_mass = inv_pusher_mass + 1.0 / object_mass + lever_t * lever_t / inertia;
            let reach = dt * params.sliding * normal_force * inv_eff_mass;
            let slip_after = regularized_friction_step(slip, reach, v_reg);
            let tangential = (slip_after - slip) / inv_eff_mass;
            pusher_vel += tangent * (tangential * inv_pusher_mass);
            body.lin_velocity -= tangent * (tangential / object_mass);
            body.ang_velocity -= lever_t * tangential / inertia;
        }

        // Support-plane friction on every object, carried by the four corners
        // of the bottom face with equal normal load.
        let support = SupportFriction {
            mass: object_mass,
            inertia,
            corner_coef: dt * (params.sliding + params.rolling) * object_mass * cfg.gravity / 4.0,
            torsion_coef: dt * params.torsional * object_mass * cfg.gravity * self.torsional_radius,
            r_eff: self.torsional_radius,
            v_reg,
        };
        let half = cfg.box_half_extents;
        for body in next.objects.iter_mut() {
            let (sin, cos) = body.yaw.sin_cos();
            let a = Vec2::new(cos * half.x - sin * half.y, sin * half.x + cos * half.y);
            let b = Vec2::new(-cos * half.x - sin * half.y, -sin * half.x + cos * half.y);
            let levers = [a, b, -a, -b];
            let (v, w) = support.solve(body.lin_velocity, body.ang_velocity, &levers);
            body.lin_velocity = v;
            body.ang_velocity = w;
            body.position += body.lin_velocity * dt;
            body.yaw = wrap_angle(body.yaw + body.ang_velocity * dt);
        }

        next.pusher.lin_velocity = pusher_vel;
        next.pusher.position += pusher_vel * dt;
        next.time = prev.time + dt;

        if !next.is_finite() {
            return Err(PhysicsError::Diverged {
                time: next.time,
                last_valid: Box::new(prev.clone()),
            });
        }
        self.state = next;
        Ok(&self.state)
    }
}

/// PID tracking controller producing an external force on the pusher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidController {
    pub kp: f64,
    pub kd: f64,
    pub ki: f64,
    pub dt: f64,
    /// Optional force magnitude limit, in newtons.
    pub max_force: Option<f64>,
    pub integral: Vec2,
}

impl PidController {
    pub fn new(kp: f64, kd: f64, ki: f64, dt: f64) -> Self {
        Self {
            kp,
            kd,
            ki,
            dt,
            max_force: None,
            integral: Vec2::zeros(),
        }
    }

    pub fn reset(&mut self) {
        self.integral = Vec2::zeros();
    }

    pub fn force(&mut self, desired_pos: Vec2, desired_vel: Vec2, actual: &BodyState) -> Vec2 {
        let error = desired_pos - actual.position;
        self.integral += error * self.dt;
        let force = error * self.kp + (desired_vel - actual.lin_velocity) * self.kd + self.integral * self.ki;
        match self.max_force {
            Some(limit) if force.norm() > limit => force * (limit / force.norm()),
            _ => force,
        }
    }
}

impl Default for PidController {
    fn default() -> Self {
        Self::new(400.0, 40.0, 0.0, 1e-3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(object: Vec2, pusher: Vec2) -> SimState {
        SimState::new(
            BodyState::at_rest(pusher, 0.0),
            vec![BodyState::at_rest(object, 0.0)],
        )
    }

    fn world(params: PhysParams, state: SimState) -> World {
        World::new(WorldConfig::default(), params, state).unwrap()
    }

    #[test]
    fn params_are_floored() {
        let p = PhysParams::new(0.0, -1.0, 1e-9, 2.0);
        assert_eq!(p.to_array(), [PARAM_FLOOR, PARAM_FLOOR, PARAM_FLOOR, 2.0]);
    }

    #[test]
    fn construction_rejects_bad_config() {
        let mut cfg = WorldConfig::default();
        cfg.dt = 0.0;
        let s = scene(Vec2::zeros(), Vec2::new(-0.2, 0.0));
        assert!(matches!(
            World::new(cfg, PhysParams::ground_truth(), s.clone()),
            Err(PhysicsError::InvalidConfig(_))
        ));
        let empty = SimState::new(s.pusher, vec![]);
        assert!(World::new(WorldConfig::default(), PhysParams::ground_truth(), empty).is_err());
    }

    #[test]
    fn snapshot_of_new_world_is_initial_state() {
        let s = scene(Vec2::zeros(), Vec2::new(-0.2, 0.0));
        assert_eq!(world(PhysParams::ground_truth(), s.clone()).snapshot(), s);
    }

    #[test]
    fn static_equilibrium() {
        let s = scene(Vec2::zeros(), Vec2::new(-0.3, 0.0));
        let mut w = world(PhysParams::ground_truth(), s.clone());
        for _ in 0..1000 {
            w.step(Vec2::zeros()).unwrap();
        }
        let after = w.snapshot();
        assert_eq!(after.pusher.position, s.pusher.position);
        assert_eq!(after.objects, s.objects);
        assert!((after.time - 1.0).abs() < 1e-9);
    }

    #[test]
    fn isolated_pusher_follows_newton() {
        let params = PhysParams::new(1.0, 0.005, 1e-4, 2.0);
        let mut w = world(params, scene(Vec2::zeros(), Vec2::new(-1.0, 0.0)));
        let force = Vec2::new(-3.0, 1.0);
        for _ in 0..200 {
            w.step(force).unwrap();
        }
        let expected = force / 2.0 * 0.2;
        assert!((w.state().pusher.lin_velocity - expected).norm() < 1e-12);
    }

    #[test]
    fn free_slide_matches_coulomb_deceleration() {
        let params = PhysParams::new(1.0, 0.005, PARAM_FLOOR, 1.0);
        let mut s = scene(Vec2::zeros(), Vec2::new(-1.0, 0.0));
        s.objects[0].lin_velocity = Vec2::new(0.5, 0.0);
        let mut w = world(params, s);
        let decel = (params.sliding + params.rolling) * 9.81;
        let band = 20.0 * 1e-3;
        for k in 1..=60 {
            let t = k as f64 * 1e-3;
            w.step(Vec2::zeros()).unwrap();
            let analytic = 0.5 - decel * t;
            if analytic > band {
                assert!((w.state().objects[0].lin_velocity.x - analytic).abs() < 1e-3);
            }
        }
        for _ in 0..200 {
            w.step(Vec2::zeros()).unwrap();
        }
        assert!(w.state().objects[0].lin_velocity.norm() < 1e-6);
    }

    #[test]
    fn free_spin_decelerates_with_corner_and_torsional_friction() {
        let params = PhysParams::new(0.4, 0.005, PARAM_FLOOR, 1.0);
        let mut s = scene(Vec2::zeros(), Vec2::new(-1.0, 0.0));
        s.objects[0].ang_velocity = 20.0;
        let cfg = WorldConfig::default();
        let (m, g, h) = (cfg.object_mass, cfg.gravity, cfg.box_half_extents);
        let torque = (params.sliding + params.rolling) * m * g * h.norm() + params.torsional * m * g * cfg.torsional_radius();
        let decel = torque / cfg.object_inertia();
        let mut w = world(params, s);
        for k in 1..=100 {
            w.step(Vec2::zeros()).unwrap();
            let analytic = 20.0 - decel * k as f64 * 1e-3;
            assert!((w.state().objects[0].ang_velocity - analytic).abs() < 1e-6, "{k} {} {analytic}", w.state().objects[0].ang_velocity);
            assert!(w.state().objects[0].lin_velocity.norm() < 1e-12);
        }
    }

    #[test]
    fn regularized_step_never_reverses() {
        for &(x, a) in &[(1e-4, 0.01), (-0.5, 0.01), (0.02, 0.0098), (3.0, 10.0)] {
            let y = regularized_friction_step(x, a, 1e-3);
            assert!(y.abs() <= x.abs());
            assert!(y == 0.0 || y.signum() == x.signum());
            let residual = y + a * (y / 1e-3).tanh() - x;
            assert!(residual.abs() < 1e-12, "{x} {a} {residual}");
        }
        assert_eq!(regularized_friction_step(0.0, 1.0, 1e-3), 0.0);
    }

    #[test]
    fn pid_gain_arithmetic() {
        let mut pid = PidController::new(100.0, 0.0, 0.0, 1e-3);
        let body = BodyState::at_rest(Vec2::zeros(), 0.0);
        let f = pid.force(Vec2::new(0.01, 0.0), Vec2::zeros(), &body);
        assert!((f - Vec2::new(1.0, 0.0)).norm() < 1e-12);
        let mut pid = PidController::default();
        assert_eq!(pid.force(Vec2::zeros(), Vec2::zeros(), &body), Vec2::zeros());
    }

    #[test]
    fn pid_saturates() {
        let mut pid = PidController::default();
        pid.max_force = Some(2.0);
        let body = BodyState::at_rest(Vec2::zeros(), 0.0);
        let f = pid.force(Vec2::new(1.0, 1.0), Vec2::zeros(), &body);
        assert!((f.norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kinematic_pusher_is_not_deflected_by_contact() {
        let mut w = world(PhysParams::ground_truth(), scene(Vec2::zeros(), Vec2::new(-0.075, 0.0)));
        let v = Vec2::new(0.2, 0.0);
        for _ in 0..300 {
            w.step_kinematic(v).unwrap();
        }
        let s = w.state();
        assert_eq!(s.pusher.lin_velocity, v);
        assert!(s.objects[0].position.x > 0.0);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(7.0) - (7.0 - 2.0 * PI)).abs() < 1e-12);
    }
}
