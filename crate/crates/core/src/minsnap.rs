//! Minimum-snap interpolation of 2D keypoints (position + velocity).
//!
//! Each segment is a degree-7 polynomial in normalized time `s = tau / T`.
//! The start state fixes position, velocity, acceleration and jerk; every
//! keypoint pins position and velocity at its segment end; acceleration and
//! jerk are continuous across interior joints and free at the terminal
//! keypoint. The equality-constrained quadratic program is solved through
//! its KKT system, which depends only on `(M, T)`; [`MinSnapSolver`] factors
//! it once and reuses the resulting linear map for every boundary value.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::Vec2;

pub const COEFFS: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum MinSnapError {
    #[error("segment duration must be positive and finite, got {0}")]
    BadDuration(f64),
    #[error("at least one keypoint is required")]
    NoKeypoints,
    #[error("keypoint count {got} does not match solver size {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("KKT system is singular")]
    Singular,
    #[error("non-finite boundary values")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub position: Vec2,
    pub velocity: Vec2,
}

impl Keypoint {
    pub fn new(position: Vec2, velocity: Vec2) -> Self {
        Self { position, velocity }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.position.x, self.position.y, self.velocity.x, self.velocity.y]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(Vec2::new(a[0], a[1]), Vec2::new(a[2], a[3]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointSequence {
    pub keypoints: Vec<Keypoint>,
    pub segment_duration: f64,
}

impl KeypointSequence {
    pub fn new(keypoints: Vec<Keypoint>, segment_duration: f64) -> Self {
        Self {
            keypoints,
            segment_duration,
        }
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.segment_duration * self.keypoints.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub acceleration: Vec2,
    pub jerk: Vec2,
}

impl BoundaryState {
    pub fn at_rest(position: Vec2) -> Self {
        Self::from_motion(position, Vec2::zeros())
    }

    pub fn from_motion(position: Vec2, velocity: Vec2) -> Self {
        Self {
            position,
            velocity,
            acceleration: Vec2::zeros(),
            jerk: Vec2::zeros(),
        }
    }

    fn derivatives(&self) -> [Vec2; 4] {
        [self.position, self.velocity, self.acceleration, self.jerk]
    }
}

/// Position and its first three derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub position: Vec2,
    pub velocity: Vec2,
    pub acceleration: Vec2,
    pub jerk: Vec2,
    /// The requested time was outside `[0, total_duration]` and was clamped.
    pub clamped: bool,
}

impl TrajectorySample {
    pub fn boundary(&self) -> BoundaryState {
        BoundaryState {
            position: self.position,
            velocity: self.velocity,
            acceleration: self.acceleration,
            jerk: self.jerk,
        }
    }
}

/// Piecewise degree-7 polynomial trajectory. Coefficients are stored per
/// segment and axis in normalized time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    segment_duration: f64,
    segments: Vec<[[f64; COEFFS]; 2]>,
}

/// `k! / (k - n)!`, zero for `n > k`.
fn falling(k: usize, n: usize) -> f64 {
    if n > k {
        return 0.0;
    }
    ((k - n + 1)..=k).map(|v| v as f64).product()
}

/// Evaluates the `n`-th derivative in normalized time.
fn eval_normalized(coeffs: &[f64; COEFFS], n: usize, s: f64) -> f64 {
    let mut acc = 0.0;
    for k in (n..COEFFS).rev() {
        acc = acc * s + coeffs[k] * falling(k, n);
    }
    acc
}

/// Integral over `[0, 1]` of the product of fourth derivatives of `s^i`, `s^j`.
fn snap_gram(i: usize, j: usize) -> f64 {
    if i < 4 || j < 4 {
        return 0.0;
    }
    falling(i, 4) * falling(j, 4) / (i + j - 7) as f64
}

impl Trajectory {
    pub fn segment_duration(&self) -> f64 {
        self.segment_duration
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn total_duration(&self) -> f64 {
        self.segment_duration * self.segments.len() as f64
    }

    /// Coefficients of segment `seg` along `axis`, as powers of `tau` in
    /// seconds from the segment start.
    pub fn coefficients(&self, seg: usize, axis: usize) -> [f64; COEFFS] {
        let c = &self.segments[seg][axis];
        std::array::from_fn(|k| c[k] / self.segment_duration.powi(k as i32))
    }

    /// Samples derivatives 0..=3 at `t`; segments are right-continuous.
    pub fn sample(&self, t: f64) -> TrajectorySample {
        let total = self.total_duration();
        let clamped = !(0.0..=total).contains(&t);
        let t = t.clamp(0.0, total);
        let seg = ((t / self.segment_duration).floor() as usize).min(self.segments.len() - 1);
        let s = (t - seg as f64 * self.segment_duration) / self.segment_duration;
        self.sample_segment(seg, s, clamped)
    }

    /// Samples the end of segment `seg` (left limit at its joint).
    pub fn sample_segment_end(&self, seg: usize) -> TrajectorySample {
        self.sample_segment(seg, 1.0, false)
    }

    fn sample_segment(&self, seg: usize, s: f64, clamped: bool) -> TrajectorySample {
        let coeffs = &self.segments[seg];
        let mut out = [Vec2::zeros(); 4];
        for (n, slot) in out.iter_mut().enumerate() {
            let scale = self.segment_duration.powi(n as i32);
            *slot = Vec2::new(
                eval_normalized(&coeffs[0], n, s) / scale,
                eval_normalized(&coeffs[1], n, s) / scale,
            );
        }
        TrajectorySample {
            position: out[0],
            velocity: out[1],
            acceleration: out[2],
            jerk: out[3],
            clamped,
        }
    }

    /// Closed-form integral of the squared snap norm over the whole trajectory.
    pub fn snap_cost(&self) -> f64 {
        let scale = self.segment_duration.powi(-7);
        let mut total = 0.0;
        for seg in &self.segments {
            for axis in seg {
                for i in 4..COEFFS {
                    for j in 4..COEFFS {
                        total += axis[i] * axis[j] * snap_gram(i, j);
                    }
                }
            }
        }
        total * scale
    }

    /// Mean squared acceleration over the `steps + 1` control instants
    /// `k * dt`, normalized by `steps`.
    pub fn mean_squared_acceleration(&self, dt: f64) -> f64 {
        let steps = (self.total_duration() / dt).round() as usize;
        if steps == 0 {
            return 0.0;
        }
        let sum: f64 = (0..=steps)
            .map(|k| self.sample(k as f64 * dt).acceleration.norm_squared())
            .sum();
        sum / steps as f64
    }

    /// Builds a trajectory directly from normalized coefficients.
    pub fn from_normalized(segment_duration: f64, segments: Vec<[[f64; COEFFS]; 2]>) -> Self {
        Self {
            segment_duration,
            segments,
        }
    }
}

/// Factored minimum-snap solver for a fixed keypoint count and segment duration.
#[derive(Debug, Clone)]
pub struct MinSnapSolver {
    segments: usize,
    segment_duration: f64,
    /// Maps the normalized boundary vector to stacked normalized coefficients.
    gain: DMatrix<f64>,
}

impl MinSnapSolver {
    pub fn new(segments: usize, segment_duration: f64) -> Result<Self, MinSnapError> {
        if segments == 0 {
            return Err(MinSnapError::NoKeypoints);
        }
        if !(segment_duration.is_finite() && segment_duration > 0.0) {
            return Err(MinSnapError::BadDuration(segment_duration));
        }
        let vars = COEFFS * segments;
        let rows = 6 * segments;
        let mut kkt = DMatrix::<f64>::zeros(vars + rows, vars + rows);
        for seg in 0..segments {
            for i in 0..COEFFS {
                for j in 0..COEFFS {
                    kkt[(seg * COEFFS + i, seg * COEFFS + j)] = 2.0 * snap_gram(i, j);
                }
            }
        }
        let constraints = constraint_matrix(segments);
        kkt.view_mut((0, vars), (vars, rows)).copy_from(&constraints.transpose());
        kkt.view_mut((vars, 0), (rows, vars)).copy_from(&constraints);

        let mut rhs = DMatrix::<f64>::zeros(vars + rows, rows);
        rhs.view_mut((vars, 0), (rows, rows)).fill_with_identity();
        let solution = kkt.lu().solve(&rhs).ok_or(MinSnapError::Singular)?;
        let gain = solution.rows(0, vars).into_owned();
        if gain.iter().any(|v| !v.is_finite()) {
            return Err(MinSnapError::Singular);
        }
        Ok(Self {
            segments,
            segment_duration,
            gain,
        })
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn segment_duration(&self) -> f64 {
        self.segment_duration
    }

    pub fn solve(&self, start: &BoundaryState, keypoints: &[Keypoint]) -> Result<Trajectory, MinSnapError> {
        if keypoints.len() != self.segments {
            return Err(MinSnapError::SizeMismatch {
                expected: self.segments,
                got: keypoints.len(),
            });
        }
        let t = self.segment_duration;
        let rows = 6 * self.segments;
        let mut segments = vec![[[0.0; COEFFS]; 2]; self.segments];
        for axis in 0..2 {
            let mut b = DVector::<f64>::zeros(rows);
            for (n, d) in start.derivatives().iter().enumerate() {
                b[n] = d[axis] * t.powi(n as i32);
            }
            let mut row = 4;
            for (j, kp) in keypoints.iter().enumerate() {
                let p = kp.position[axis];
                let v = kp.velocity[axis] * t;
                b[row] = p;
                b[row + 1] = v;
                row += 2;
                if j + 1 < self.segments {
                    b[row] = p;
                    b[row + 1] = v;
                    row += 4;
                }
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(MinSnapError::NonFinite);
            }
            let coeffs = &self.gain * b;
            for (seg, slot) in segments.iter_mut().enumerate() {
                for k in 0..COEFFS {
                    slot[axis][k] = coeffs[seg * COEFFS + k];
                }
            }
        }
        Ok(Trajectory {
            segment_duration: t,
            segments,
        })
    }
}

/// Constraint rows in normalized-derivative units, in the order used by
/// [`MinSnapSolver::solve`] to fill the boundary vector.
fn constraint_matrix(segments: usize) -> DMatrix<f64> {
    let vars = COEFFS * segments;
    let mut a = DMatrix::<f64>::zeros(6 * segments, vars);
    let mut put = |row: usize, seg: usize, n: usize, s: f64, sign: f64| {
        for k in n..COEFFS {
            a[(row, seg * COEFFS + k)] += sign * falling(k, n) * s.powi((k - n) as i32);
        }
    };
    for n in 0..4 {
        put(n, 0, n, 0.0, 1.0);
    }
    let mut row = 4;
    for seg in 0..segments {
        put(row, seg, 0, 1.0, 1.0);
        put(row + 1, seg, 1, 1.0, 1.0);
        row += 2;
        if seg + 1 < segments {
            put(row, seg + 1, 0, 0.0, 1.0);
            put(row + 1, seg + 1, 1, 0.0, 1.0);
            for n in 2..4 {
                put(row + n, seg, n, 1.0, 1.0);
                put(row + n, seg + 1, n, 0.0, -1.0);
            }
            row += 4;
        }
    }
    a
}

/// One-shot minimum-snap planning through `keypoints` from `start`.
pub fn plan_min_snap(start: &BoundaryState, keypoints: &KeypointSequence) -> Result<Trajectory, MinSnapError> {
    MinSnapSolver::new(keypoints.len(), keypoints.segment_duration)?.solve(start, &keypoints.keypoints)
}
