//! Independent minimum-snap oracle: physical time monomials, a
//! Gauss-Legendre snap Gram matrix, and a null-space solve seeded with the
//! least-norm feasible point.

use nalgebra::{DMatrix, DVector};
use pushadapt_core::minsnap::{BoundaryState, Keypoint};
use pushadapt_core::Vec2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const N: usize = 8;

/// d^n/dtau^n of tau^k at tau.
pub fn mono(k: usize, n: usize, tau: f64) -> f64 {
    if n > k {
        return 0.0;
    }
    let f: f64 = ((k - n + 1)..=k).map(|v| v as f64).product();
    f * tau.powi((k - n) as i32)
}

pub fn gram(t: f64) -> DMatrix<f64> {
    // 5-point Gauss-Legendre on [-1, 1]; exact for the degree-6 integrand.
    let nodes = [
        (0.0, 0.568_888_888_888_888_9),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let mut q = DMatrix::zeros(N, N);
    for (x, w) in nodes {
        let tau = 0.5 * t * (x + 1.0);
        for i in 0..N {
            for j in 0..N {
                q[(i, j)] += 0.5 * t * w * mono(i, 4, tau) * mono(j, 4, tau);
            }
        }
    }
    q
}

pub struct Instance {
    pub start: BoundaryState,
    pub keypoints: Vec<Keypoint>,
    pub t: f64,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let m = rng.random_range(1..=5);
    let mut v2 = |s: f64| Vec2::new(rng.random_range(-s..s), rng.random_range(-s..s));
    let start = BoundaryState {
        position: v2(0.3),
        velocity: v2(0.5),
        acceleration: v2(2.0),
        jerk: v2(20.0),
    };
    let keypoints = (0..m).map(|_| Keypoint::new(v2(0.3), v2(0.5))).collect();
    Instance {
        start,
        keypoints,
        t: rng.random_range(0.1..0.5),
    }
}

/// Returns (coefficients per segment, snap cost) for one axis.
pub fn oracle_axis(inst: &Instance, axis: usize) -> (Vec<[f64; N]>, f64) {
    let m = inst.keypoints.len();
    let t = inst.t;
    let vars = N * m;
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let row = |entries: &[(usize, usize, f64, f64)], rhs: f64| {
        let mut r = vec![0.0; vars];
        for &(seg, n, tau, sign) in entries {
            for k in 0..N {
                r[seg * N + k] += sign * mono(k, n, tau);
            }
        }
        (r, rhs)
    };
    let s = &inst.start;
    let start = [s.position, s.velocity, s.acceleration, s.jerk];
    for (n, d) in start.iter().enumerate() {
        rows.push(row(&[(0, n, 0.0, 1.0)], d[axis]));
    }
    for (j, kp) in inst.keypoints.iter().enumerate() {
        rows.push(row(&[(j, 0, t, 1.0)], kp.position[axis]));
        rows.push(row(&[(j, 1, t, 1.0)], kp.velocity[axis]));
        if j + 1 < m {
            rows.push(row(&[(j + 1, 0, 0.0, 1.0)], kp.position[axis]));
            rows.push(row(&[(j + 1, 1, 0.0, 1.0)], kp.velocity[axis]));
            for n in 2..4 {
                rows.push(row(&[(j, n, t, 1.0), (j + 1, n, 0.0, -1.0)], 0.0));
            }
        }
    }
    let c = rows.len();
    let a = DMatrix::from_fn(c, vars, |i, k| rows[i].0[k]);
    let b = DVector::from_fn(c, |i, _| rows[i].1);

    // Least-norm feasible point.
    let svd = a.clone().svd(true, true);
    let x0 = svd.solve(&b, 1e-12).unwrap();

    // Null-space basis from the full right singular vectors of the padded square matrix.
    let mut square = DMatrix::zeros(vars, vars);
    square.view_mut((0, 0), (c, vars)).copy_from(&a);
    let full = square.svd(false, true);
    let vt = full.v_t.unwrap();
    let smax = full.singular_values.max();
    let basis: Vec<DVector<f64>> = (0..vars)
        .filter(|&i| full.singular_values[i] < 1e-10 * smax)
        .map(|i| vt.row(i).transpose())
        .collect();
    assert_eq!(basis.len(), vars - c);
    let z = DMatrix::from_columns(&basis);

    let mut q = DMatrix::zeros(vars, vars);
    let g = gram(t);
    for seg in 0..m {
        q.view_mut((seg * N, seg * N), (N, N)).copy_from(&g);
    }
    let reduced = z.transpose() * &q * &z;
    let rhs = -(z.transpose() * &q * &x0);
    let y = reduced.cholesky().expect("reduced Gram is positive definite").solve(&rhs);
    let x = x0 + z * y;
    let cost = (x.transpose() * &q * &x)[(0, 0)];
    let coeffs = (0..m).map(|seg| std::array::from_fn(|k| x[seg * N + k])).collect();
    (coeffs, cost)
}
