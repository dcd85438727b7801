//! Evaluation metrics over sets of executed pushing tasks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::Vec2;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("metrics need at least one episode")]
    Empty,
}

/// Outcome and trajectories of one executed task.
///
/// Trajectory vectors hold the state at `t = 0` followed by the state after
/// every control step; `loss_pos[k]`/`loss_rot[k]` are the task loss terms of
/// the same sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub terminal_time: f64,
    pub times: Vec<f64>,
    pub object_trajectory: Vec<Vec2>,
    pub pusher_trajectory: Vec<Vec2>,
    pub object_yaw: Vec<f64>,
    pub loss_pos: Vec<f64>,
    pub loss_rot: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub success_rate: f64,
    pub mean_time: f64,
    pub avg_object_loss: f64,
    pub avg_object_length: f64,
    pub avg_pusher_length: f64,
}

pub fn success_rate(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}

pub fn mean_execution_time(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(results.iter().map(|r| r.terminal_time).sum::<f64>() / results.len() as f64)
}

/// `1e-4 / H * sum_j sum_t (L_pos + lambda_rot * L_rot)`.
pub fn avg_object_loss(results: &[EpisodeResult], lambda_rot: f64) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty);
    }
    let total: f64 = results
        .iter()
        .map(|r| {
            r.loss_pos
                .iter()
                .zip(&r.loss_rot)
                .map(|(p, q)| p + lambda_rot * q)
                .sum::<f64>()
        })
        .sum();
    Ok(1e-4 * total / results.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLength {
    pub meters: f64,
    /// Fewer than two samples were given; `meters` is zero.
    pub degenerate: bool,
}

/// Gaussian smoothing with the kernel truncated at `round(4 sigma)` samples
/// and renormalized where it overhangs the sequence ends. `sigma <= 0`
/// returns the input unchanged.
pub fn gaussian_smooth(values: &[f64], sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 || values.len() < 2 {
        return values.to_vec();
    }
    let radius = (4.0 * sigma + 0.5) as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let n = values.len() as isize;
    (0..n)
        .map(|i| {
            let lo = (i - radius).max(0);
            let hi = (i + radius).min(n - 1);
            let mut acc = 0.0;
            let mut norm = 0.0;
            for j in lo..=hi {
                let w = kernel[(j - i + radius) as usize];
                acc += w * values[j as usize];
                norm += w;
            }
            acc / norm
        })
        .collect()
}

/// Polyline length after per-coordinate Gaussian smoothing (`sigma` in samples).
pub fn trajectory_length(positions: &[Vec2], smoothing_sigma: f64) -> PathLength {
    if positions.len() < 2 {
        return PathLength {
            meters: 0.0,
            degenerate: true,
        };
    }
    let xs: Vec<f64> = positions.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = positions.iter().map(|p| p.y).collect();
    let (xs, ys) = (gaussian_smooth(&xs, smoothing_sigma), gaussian_smooth(&ys, smoothing_sigma));
    let meters = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]).hypot(y[1] - y[0]))
        .sum();
    PathLength {
        meters,
        degenerate: false,
    }
}

pub fn report(results: &[EpisodeResult], lambda_rot: f64, smoothing_sigma: f64) -> Result<MetricsReport, MetricsError> {
    let h = results.len() as f64;
    let avg_len = |f: fn(&EpisodeResult) -> &Vec<Vec2>| {
        results
            .iter()
            .map(|r| trajectory_length(f(r), smoothing_sigma).meters)
            .sum::<f64>()
            / h
    };
    Ok(MetricsReport {
        success_rate: success_rate(results)?,
        mean_time: mean_execution_time(results)?,
        avg_object_loss: avg_object_loss(results, lambda_rot)?,
        avg_object_length: avg_len(|r| &r.object_trajectory),
        avg_pusher_length: avg_len(|r| &r.pusher_trajectory),
    })
}
