//! Python bindings: physics world, minimum-snap planning, replay buffers,
//! closed-loop episodes, evaluation and full experiments.
//!
//! Configuration is passed as TOML text overlaid on the profile defaults,
//! the same format the `pushadapt` command line reads.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pushadapt_core::adapt;
use pushadapt_core::harness::{self, ExperimentConfig, Profile, TargetPose};
use pushadapt_core::metrics;
use pushadapt_core::minsnap::{self, BoundaryState, Keypoint, KeypointSequence};
use pushadapt_core::physics::{self, BodyState, SimState};
use pushadapt_core::Vec2;

type P2 = (f64, f64);

fn v2(p: P2) -> Vec2 {
    Vec2::new(p.0, p.1)
}

fn tup(v: Vec2) -> P2 {
    (v.x, v.y)
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn load_config(config: Option<&str>, profile: &str) -> PyResult<ExperimentConfig> {
    let profile: Profile = profile.parse().map_err(value_err)?;
    ExperimentConfig::from_toml_str(config.unwrap_or(""), profile, false).map_err(value_err)
}

#[pyclass(name = "PhysParams", module = "pushadapt", skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyPhysParams {
    inner: physics::PhysParams,
}

#[pymethods]
impl PyPhysParams {
    #[new]
    #[pyo3(signature = (sliding = 1.0, torsional = 0.005, rolling = 1e-4, pusher_mass = 1.0))]
    fn new(sliding: f64, torsional: f64, rolling: f64, pusher_mass: f64) -> PyResult<Self> {
        let values = [sliding, torsional, rolling, pusher_mass];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(value_err("parameters must be finite"));
        }
        Ok(Self {
            inner: physics::PhysParams::from_array(values),
        })
    }

    #[staticmethod]
    fn ground_truth() -> Self {
        Self {
            inner: physics::PhysParams::ground_truth(),
        }
    }

    #[getter]
    fn sliding(&self) -> f64 {
        self.inner.sliding
    }

    #[getter]
    fn torsional(&self) -> f64 {
        self.inner.torsional
    }

    #[getter]
    fn rolling(&self) -> f64 {
        self.inner.rolling
    }

    #[getter]
    fn pusher_mass(&self) -> f64 {
        self.inner.pusher_mass
    }

    fn to_list(&self) -> [f64; 4] {
        self.inner.to_array()
    }

    fn relative_errors(&self, reference: PyRef<'_, Self>) -> [f64; 4] {
        self.inner.relative_errors(&reference.inner)
    }

    fn __repr__(&self) -> String {
        let p = self.inner;
        format!(
            "PhysParams(sliding={}, torsional={}, rolling={}, pusher_mass={})",
            p.sliding, p.torsional, p.rolling, p.pusher_mass
        )
    }
}

fn params_or_gt(params: Option<PyRef<'_, PyPhysParams>>, cfg: &ExperimentConfig) -> physics::PhysParams {
    params.map_or(cfg.env_params, |p| p.inner)
}

fn state_dict<'py>(py: Python<'py>, s: &SimState) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let o = s.object();
    d.set_item("time", s.time)?;
    d.set_item("pusher", tup(s.pusher.position))?;
    d.set_item("pusher_velocity", tup(s.pusher.lin_velocity))?;
    d.set_item("object", (o.position.x, o.position.y, o.yaw))?;
    d.set_item("object_velocity", (o.lin_velocity.x, o.lin_velocity.y, o.ang_velocity))?;
    Ok(d)
}

/// Pusher disc and one box on a plane.
#[pyclass(name = "World", module = "pushadapt")]
struct PyWorld {
    inner: physics::World,
}

#[pymethods]
impl PyWorld {
    #[new]
    #[pyo3(signature = (params = None, pusher = (-0.1, 0.0), object = (0.0, 0.0, 0.0), config = None))]
    fn new(
        params: Option<PyRef<'_, PyPhysParams>>,
        pusher: P2,
        object: (f64, f64, f64),
        config: Option<&str>,
    ) -> PyResult<Self> {
        let cfg = load_config(config, "sim")?;
        let state = SimState::new(
            BodyState::at_rest(v2(pusher), 0.0),
            vec![BodyState::at_rest(Vec2::new(object.0, object.1), object.2)],
        );
        let inner = physics::World::new(cfg.world.clone(), params_or_gt(params, &cfg), state).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// One step with an external force on the pusher, in newtons.
    fn step<'py>(&mut self, py: Python<'py>, fx: f64, fy: f64) -> PyResult<Bound<'py, PyDict>> {
        let s = self.inner.step(Vec2::new(fx, fy)).map_err(runtime_err)?;
        state_dict(py, s)
    }

    /// One step with the pusher velocity imposed, in m/s.
    fn step_velocity<'py>(&mut self, py: Python<'py>, vx: f64, vy: f64) -> PyResult<Bound<'py, PyDict>> {
        let s = self.inner.step_kinematic(Vec2::new(vx, vy)).map_err(runtime_err)?;
        state_dict(py, s)
    }

    fn state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        state_dict(py, self.inner.state())
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt()
    }

    #[getter]
    fn params(&self) -> PyPhysParams {
        PyPhysParams {
            inner: *self.inner.params(),
        }
    }

    #[setter]
    fn set_params(&mut self, params: PyRef<'_, PyPhysParams>) -> PyResult<()> {
        self.inner.set_params(params.inner).map_err(value_err)
    }
}

#[pyclass(name = "Trajectory", module = "pushadapt")]
struct PyTrajectory {
    inner: minsnap::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    fn sample<'py>(&self, py: Python<'py>, t: f64) -> PyResult<Bound<'py, PyDict>> {
        let s = self.inner.sample(t);
        let d = PyDict::new(py);
        d.set_item("position", tup(s.position))?;
        d.set_item("velocity", tup(s.velocity))?;
        d.set_item("acceleration", tup(s.acceleration))?;
        d.set_item("jerk", tup(s.jerk))?;
        Ok(d)
    }

    fn snap_cost(&self) -> f64 {
        self.inner.snap_cost()
    }

    #[getter]
    fn total_duration(&self) -> f64 {
        self.inner.total_duration()
    }

    #[getter]
    fn segment_count(&self) -> usize {
        self.inner.segment_count()
    }
}

/// Minimum-snap trajectory from a start state through `(px, py, vx, vy)` keypoints.
#[pyfunction]
#[pyo3(signature = (start, keypoints, segment_duration, start_velocity = (0.0, 0.0), start_acceleration = (0.0, 0.0), start_jerk = (0.0, 0.0)))]
fn plan_min_snap(
    start: P2,
    keypoints: Vec<(f64, f64, f64, f64)>,
    segment_duration: f64,
    start_velocity: P2,
    start_acceleration: P2,
    start_jerk: P2,
) -> PyResult<PyTrajectory> {
    let boundary = BoundaryState {
        position: v2(start),
        velocity: v2(start_velocity),
        acceleration: v2(start_acceleration),
        jerk: v2(start_jerk),
    };
    let kps = keypoints.into_iter().map(|k| Keypoint::from_array([k.0, k.1, k.2, k.3])).collect();
    let inner = minsnap::plan_min_snap(&boundary, &KeypointSequence::new(kps, segment_duration)).map_err(value_err)?;
    Ok(PyTrajectory { inner })
}

#[pyclass(name = "ReplayBuffer", module = "pushadapt")]
#[derive(Default)]
struct PyReplayBuffer {
    inner: adapt::ReplayBuffer,
}

#[pymethods]
impl PyReplayBuffer {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: adapt::ReplayBuffer::load(std::path::Path::new(path)).map_err(value_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(std::path::Path::new(path)).map_err(runtime_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: adapt::ReplayBuffer::from_json(text).map_err(value_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(runtime_err)
    }

    /// Appends the rollouts of `other` in order.
    fn extend(&mut self, other: PyRef<'_, Self>) -> PyResult<()> {
        for r in other.inner.rollouts() {
            self.inner.append(r.clone()).map_err(value_err)?;
        }
        Ok(())
    }

    fn total_steps(&self) -> usize {
        self.inner.total_steps()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Weighted replay mismatch of `params` over `buffer`.
#[pyfunction]
#[pyo3(signature = (params, buffer, config = None))]
fn replay_cost(
    py: Python<'_>,
    params: PyRef<'_, PyPhysParams>,
    buffer: PyRef<'_, PyReplayBuffer>,
    config: Option<&str>,
) -> PyResult<f64> {
    let cfg = load_config(config, "sim")?;
    let (p, b) = (params.inner, &buffer.inner);
    Ok(py.detach(|| adapt::replay_cost(&p, b, &cfg.world, &cfg.adapt)))
}

/// Parameter CEM on `buffer` from the configured prior; returns the best
/// parameters and their cost.
#[pyfunction]
#[pyo3(signature = (buffer, config = None, seed = 0, profile = "sim"))]
fn optimize_params(
    py: Python<'_>,
    buffer: PyRef<'_, PyReplayBuffer>,
    config: Option<&str>,
    seed: u64,
    profile: &str,
) -> PyResult<(PyPhysParams, f64)> {
    let mut cfg = load_config(config, profile)?;
    cfg.seed = seed;
    let b = &buffer.inner;
    let out = py.detach(|| harness::replay_optimize(&cfg, b)).map_err(runtime_err)?;
    Ok((PyPhysParams { inner: out.best_params }, out.best_cost))
}

/// Executes one task in the environment with MPC on a model using `params`
/// (ground truth when omitted).
#[pyfunction]
#[pyo3(signature = (target, params = None, seed = 0, config = None, profile = "sim"))]
fn run_episode<'py>(
    py: Python<'py>,
    target: (f64, f64, f64),
    params: Option<PyRef<'py, PyPhysParams>>,
    seed: u64,
    config: Option<&str>,
    profile: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load_config(config, profile)?;
    let model = params_or_gt(params, &cfg);
    let task = cfg.task_for(&TargetPose::new(target.0, target.1, target.2));
    let out = py
        .detach(|| harness::run_episode(&cfg, &cfg.env_params, &model, &task, seed))
        .map_err(runtime_err)?;
    let r = &out.result;
    let d = PyDict::new(py);
    d.set_item("success", r.success)?;
    d.set_item("terminal_time", r.terminal_time)?;
    d.set_item("plan_calls", out.plan_calls)?;
    d.set_item("failure", out.failure.clone())?;
    d.set_item("times", r.times.clone())?;
    d.set_item("object_trajectory", r.object_trajectory.iter().map(|p| tup(*p)).collect::<Vec<_>>())?;
    d.set_item("pusher_trajectory", r.pusher_trajectory.iter().map(|p| tup(*p)).collect::<Vec<_>>())?;
    d.set_item("object_yaw", r.object_yaw.clone())?;
    let mut buffer = adapt::ReplayBuffer::new();
    if !out.rollout.controls.is_empty() {
        buffer.append(out.rollout).map_err(runtime_err)?;
    }
    d.set_item("buffer", Py::new(py, PyReplayBuffer { inner: buffer })?)?;
    Ok(d)
}

fn report_dict<'py>(py: Python<'py>, r: &metrics::MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("success_rate", r.success_rate)?;
    d.set_item("mean_time", r.mean_time)?;
    d.set_item("avg_object_loss", r.avg_object_loss)?;
    d.set_item("avg_object_length", r.avg_object_length)?;
    d.set_item("avg_pusher_length", r.avg_pusher_length)?;
    Ok(d)
}

/// Runs the configured evaluation tasks and returns the aggregate metrics.
#[pyfunction]
#[pyo3(signature = (params = None, seed = 0, config = None, profile = "sim"))]
fn evaluate<'py>(
    py: Python<'py>,
    params: Option<PyRef<'py, PyPhysParams>>,
    seed: u64,
    config: Option<&str>,
    profile: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load_config(config, profile)?;
    let model = params_or_gt(params, &cfg);
    let e = py.detach(|| harness::evaluate(&cfg, &model, seed)).map_err(runtime_err)?;
    let d = report_dict(py, &e.report)?;
    d.set_item("success", e.outcomes.iter().map(|o| o.result.success).collect::<Vec<_>>())?;
    Ok(d)
}

/// Runs the full experiment, writes the report to `out_dir` when given,
/// and returns the records as JSON lines.
#[pyfunction]
#[pyo3(signature = (config = None, out_dir = None, profile = "sim"))]
fn run_experiment(py: Python<'_>, config: Option<&str>, out_dir: Option<&str>, profile: &str) -> PyResult<Vec<String>> {
    let cfg = load_config(config, profile)?;
    let log = py.detach(|| harness::run_experiment(&cfg)).map_err(runtime_err)?;
    if let Some(dir) = out_dir {
        harness::emit_report(&log, std::path::Path::new(dir)).map_err(runtime_err)?;
    }
    log.records
        .iter()
        .map(|r| serde_json::to_string(r).map_err(runtime_err))
        .collect()
}

/// Profile defaults as TOML text.
#[pyfunction]
#[pyo3(signature = (profile = "sim", paper_scale = false))]
fn default_config(profile: &str, paper_scale: bool) -> PyResult<String> {
    let profile: Profile = profile.parse().map_err(value_err)?;
    ExperimentConfig::for_profile(profile, paper_scale).to_toml_string().map_err(runtime_err)
}

#[pyfunction]
#[pyo3(signature = (points, smoothing_sigma = 0.0))]
fn trajectory_length(points: Vec<P2>, smoothing_sigma: f64) -> f64 {
    let pts: Vec<Vec2> = points.into_iter().map(v2).collect();
    metrics::trajectory_length(&pts, smoothing_sigma).meters
}

#[pyfunction]
fn gaussian_smooth(values: Vec<f64>, sigma: f64) -> Vec<f64> {
    metrics::gaussian_smooth(&values, sigma)
}

#[pymodule]
fn pushadapt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPhysParams>()?;
    m.add_class::<PyWorld>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyReplayBuffer>()?;
    m.add_function(wrap_pyfunction!(plan_min_snap, m)?)?;
    m.add_function(wrap_pyfunction!(replay_cost, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_params, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory_length, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_smooth, m)?)?;
    Ok(())
}
