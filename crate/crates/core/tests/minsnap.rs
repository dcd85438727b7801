#[path = "support/minsnap_oracle.rs"]
mod oracle;

use oracle::{oracle_axis, random_instance, Instance, N};
use pushadapt_core::minsnap::{plan_min_snap, KeypointSequence, Trajectory};
use pushadapt_core::Vec2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn solve(inst: &Instance) -> Trajectory {
    plan_min_snap(&inst.start, &KeypointSequence::new(inst.keypoints.clone(), inst.t)).unwrap()
}

#[test]
fn matches_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let inst = random_instance(&mut rng);
        let traj = solve(&inst);
        let mut oracle_cost = 0.0;
        for axis in 0..2 {
            let (coeffs, cost) = oracle_axis(&inst, axis);
            oracle_cost += cost;
            for (seg, expected) in coeffs.iter().enumerate() {
                let got = traj.coefficients(seg, axis);
                for k in 0..N {
                    let scale = inst.t.powi(k as i32);
                    assert!(
                        ((got[k] - expected[k]) * scale).abs() <= 1e-7 * (1.0 + (expected[k] * scale).abs()),
                        "case {case} seg {seg} axis {axis} k {k}: {} vs {}",
                        got[k],
                        expected[k]
                    );
                }
            }
        }
        let rel = (traj.snap_cost() - oracle_cost).abs() / oracle_cost.max(1e-300);
        assert!(rel <= 1e-6, "case {case}: snap cost {} vs oracle {oracle_cost}", traj.snap_cost());
    }
}

#[test]
fn boundary_and_continuity_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..100 {
        let inst = random_instance(&mut rng);
        let traj = solve(&inst);
        let s0 = traj.sample(0.0);
        let start = &inst.start;
        for (got, want) in [
            (s0.position, start.position),
            (s0.velocity, start.velocity),
            (s0.acceleration, start.acceleration),
            (s0.jerk, start.jerk),
        ] {
            assert!((got - want).amax() <= 1e-9, "case {case}: start {got:?} vs {want:?}");
        }
        let m = inst.keypoints.len();
        for (j, kp) in inst.keypoints.iter().enumerate() {
            let left = traj.sample_segment_end(j);
            assert!((left.position - kp.position).amax() <= 1e-9, "case {case} keypoint {j}");
            assert!((left.velocity - kp.velocity).amax() <= 1e-9, "case {case} keypoint {j}");
            if j + 1 < m {
                let right = traj.sample((j + 1) as f64 * inst.t);
                for (a, b, tol) in [
                    (left.position, right.position, 1e-9),
                    (left.velocity, right.velocity, 1e-9),
                    (left.acceleration, right.acceleration, 1e-9 * (1.0 + left.acceleration.amax())),
                    (left.jerk, right.jerk, 1e-9 * (1.0 + left.jerk.amax())),
                ] {
                    assert!((a - b).amax() <= tol, "case {case} joint {j}: {a:?} vs {b:?}");
                }
            }
        }
    }
}

#[test]
fn derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let h = 1e-4;
    for _ in 0..50 {
        let inst = random_instance(&mut rng);
        let traj = solve(&inst);
        for seg in 0..inst.keypoints.len() {
            for s in [0.13, 0.5, 0.87] {
                let t = (seg as f64 + s) * inst.t;
                let at = |k: f64| traj.sample(t + k * h);
                let (m2, m1, mid, p1, p2) = (at(-2.0), at(-1.0), at(0.0), at(1.0), at(2.0));
                // Fourth-order central difference.
                let fd = |a: Vec2, b: Vec2, c: Vec2, d: Vec2| (a - b * 8.0 + c * 8.0 - d) / (12.0 * h);
                for (d, exact) in [
                    (fd(m2.position, m1.position, p1.position, p2.position), mid.velocity),
                    (fd(m2.velocity, m1.velocity, p1.velocity, p2.velocity), mid.acceleration),
                    (fd(m2.acceleration, m1.acceleration, p1.acceleration, p2.acceleration), mid.jerk),
                ] {
                    assert!(
                        (d - exact).amax() <= 1e-6 * (1.0 + exact.amax()),
                        "t {t}: finite difference {d:?} vs {exact:?}"
                    );
                }
            }
        }
    }
}

#[test]
fn perturbing_free_coefficients_never_lowers_the_cost() {
    // Shifting a single-segment solution along the constraint null space
    // (here: the free acceleration and jerk at the end) raises the snap cost.
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let mut inst = random_instance(&mut rng);
        inst.keypoints.truncate(1);
        let traj = solve(&inst);
        let t = inst.t;
        let base = traj.snap_cost();
        // Polynomials vanishing with their first four derivatives at 0 and
        // their first two at t: tau^4 (tau - t)^2 and tau^5 (tau - t)^2.
        let dirs = [[0.0, 0.0, 0.0, 0.0, t * t, -2.0 * t, 1.0, 0.0], [0.0, 0.0, 0.0, 0.0, 0.0, t * t, -2.0 * t, 1.0]];
        for dir in dirs {
            for eps in [1e-3, -1e-3, 10.0, -10.0] {
                let mut segs = Vec::new();
                let mut axes = [[0.0; N]; 2];
                for (axis, slot) in axes.iter_mut().enumerate() {
                    let c = traj.coefficients(0, axis);
                    for k in 0..N {
                        slot[k] = (c[k] + eps * dir[k]) * t.powi(k as i32);
                    }
                }
                segs.push(axes);
                let moved = Trajectory::from_normalized(t, segs);
                assert!(moved.snap_cost() >= base * (1.0 - 1e-9));
            }
        }
    }
}
