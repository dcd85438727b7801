use proptest::prelude::*;
use pushadapt_core::metrics::{avg_object_loss, gaussian_smooth, mean_execution_time, report, success_rate, trajectory_length, EpisodeResult};
use pushadapt_core::Vec2;

#[test]
fn smoothing_attenuates_sinusoids_like_a_gaussian_filter() {
    // Continuous Gaussian frequency response exp(-sigma^2 w^2 / 2); the
    // sampled, 4-sigma truncated kernel agrees to well under 1e-3.
    for sigma in [2.0, 5.0, 12.0] {
        for w in [0.02, 0.1, 0.25] {
            let n = 2000;
            let x: Vec<f64> = (0..n).map(|k| (w * k as f64).cos()).collect();
            let y = gaussian_smooth(&x, sigma);
            let gain = (-0.5 * sigma * sigma * w * w).exp();
            let margin = (4.0 * sigma) as usize + 2;
            for i in (margin..n - margin).step_by(37) {
                assert!((y[i] - gain * x[i]).abs() < 1e-3, "sigma {sigma} w {w} i {i}: {} vs {}", y[i], gain * x[i]);
            }
        }
    }
}

#[test]
fn smoothing_preserves_constants_everywhere_and_lines_inside() {
    let c = vec![3.25; 300];
    assert!(gaussian_smooth(&c, 7.0).iter().all(|v| (v - 3.25).abs() < 1e-12));
    let line: Vec<f64> = (0..300).map(|k| 0.01 * k as f64 - 1.0).collect();
    let y = gaussian_smooth(&line, 7.0);
    for i in 30..270 {
        assert!((y[i] - line[i]).abs() < 1e-12);
    }
    assert_eq!(gaussian_smooth(&line, 0.0), line);
}

#[test]
fn polyline_length_of_a_circle() {
    let r = 0.2;
    let n = 10_000;
    let pts: Vec<Vec2> = (0..=n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            Vec2::new(r * a.cos(), r * a.sin())
        })
        .collect();
    let len = trajectory_length(&pts, 0.0);
    assert!(!len.degenerate);
    assert!((len.meters - std::f64::consts::TAU * r).abs() < 1e-6);
    assert!(trajectory_length(&pts[..1], 0.0).degenerate);
}

#[test]
fn smoothing_shortens_jittery_paths() {
    let pts: Vec<Vec2> = (0..1000)
        .map(|k| Vec2::new(1e-3 * k as f64, if k % 2 == 0 { 1e-3 } else { -1e-3 }))
        .collect();
    let raw = trajectory_length(&pts, 0.0).meters;
    let smooth = trajectory_length(&pts, 10.0).meters;
    assert!(smooth < raw);
    // Edge renormalization pulls both ends inward by about sigma * sqrt(2 / pi) samples.
    let inset = 2.0 * 10.0 * (2.0 / std::f64::consts::PI).sqrt() * 1e-3;
    assert!((smooth - (0.999 - inset)).abs() < 2e-3, "{smooth}");
}

fn result(success: bool, time: f64, losses: &[(f64, f64)]) -> EpisodeResult {
    let n = losses.len();
    EpisodeResult {
        success,
        terminal_time: time,
        times: (0..n).map(|k| k as f64 * 1e-3).collect(),
        object_trajectory: (0..n).map(|k| Vec2::new(k as f64 * 1e-3, 0.0)).collect(),
        pusher_trajectory: (0..n).map(|k| Vec2::new(k as f64 * 1e-3 - 0.07, 0.0)).collect(),
        object_yaw: vec![0.0; n],
        loss_pos: losses.iter().map(|l| l.0).collect(),
        loss_rot: losses.iter().map(|l| l.1).collect(),
    }
}

#[test]
fn empty_sets_are_errors() {
    assert!(success_rate(&[]).is_err());
    assert!(mean_execution_time(&[]).is_err());
    assert!(avg_object_loss(&[], 1.0).is_err());
    assert!(report(&[], 1.0, 0.0).is_err());
}

proptest! {
    #[test]
    fn metrics_are_permutation_invariant(
        specs in prop::collection::vec((any::<bool>(), 0.0..5.0f64, prop::collection::vec((0.0..1.0f64, 0.0..3.0f64), 1..20)), 1..8),
        rot in 0.0..2.0f64,
        shift in 0usize..8,
    ) {
        let results: Vec<EpisodeResult> = specs.iter().map(|(s, t, l)| result(*s, *t, l)).collect();
        let mut rotated = results.clone();
        rotated.rotate_left(shift % results.len());
        rotated.reverse();
        let a = report(&results, rot, 0.0).unwrap();
        let b = report(&rotated, rot, 0.0).unwrap();
        prop_assert_eq!(a.success_rate, b.success_rate);
        prop_assert!((a.mean_time - b.mean_time).abs() <= 1e-12 * (1.0 + a.mean_time));
        prop_assert!((a.avg_object_loss - b.avg_object_loss).abs() <= 1e-12 * (1.0 + a.avg_object_loss));
        prop_assert!((a.avg_object_length - b.avg_object_length).abs() <= 1e-12);
        prop_assert!(a.success_rate >= 0.0 && a.success_rate <= 1.0);
    }
}
