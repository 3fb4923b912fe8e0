//! Python bindings: poses, run configuration, the synthetic simulator, the
//! mapping pipeline and the relation metric.

use std::fs;
use std::io::BufReader;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use slam::config::RunConfig;
use slam::data_io::{write_pgm, Scan};
use slam::geometry::{MotionDelta, Point2};
use slam::metrics::{parse_relations, Relation};
use slam::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::IoStream(_) => PyIOError::new_err(e.to_string()),
        Error::Solver(_) | Error::NotPsd { .. } | Error::Degenerate(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Row = (f64, f64, f64, f64);
type RelationRow = (f64, f64, f64, f64, f64);

fn rows(poses: &[(f64, slam::geometry::Pose2)]) -> Vec<Row> {
    poses.iter().map(|(t, p)| (*t, p.x, p.y, p.theta)).collect()
}

/// Planar pose `(x, y, theta)`.
#[pyclass(module = "sparse_slam", from_py_object)]
#[derive(Clone, Copy)]
struct Pose2(slam::geometry::Pose2);

#[pymethods]
impl Pose2 {
    #[new]
    #[pyo3(signature = (x=0.0, y=0.0, theta=0.0))]
    fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2(slam::geometry::Pose2::new(x, y, theta))
    }

    #[getter]
    fn x(&self) -> f64 {
        self.0.x
    }

    #[getter]
    fn y(&self) -> f64 {
        self.0.y
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta
    }

    /// `self ⊕ other`, treating `other` as a relative motion.
    fn compose(&self, other: &Pose2) -> Pose2 {
        Pose2(self.0.compose(&other.0.as_delta()))
    }

    fn inverse(&self) -> Pose2 {
        Pose2(self.0.inverse())
    }

    /// Motion taking `self` to `other`, expressed in the frame of `self`.
    fn between(&self, other: &Pose2) -> Pose2 {
        Pose2(self.0.between(&other.0).as_pose())
    }

    fn transform_point(&self, x: f64, y: f64) -> (f64, f64) {
        let q = self.0.transform_point(&Point2::new(x, y));
        (q.x, q.y)
    }

    fn as_tuple(&self) -> (f64, f64, f64) {
        (self.0.x, self.0.y, self.0.theta)
    }

    fn __repr__(&self) -> String {
        format!("Pose2(x={}, y={}, theta={})", self.0.x, self.0.y, self.0.theta)
    }
}

/// Run options; any option can be read or set by name.
#[pyclass(module = "sparse_slam", from_py_object)]
#[derive(Clone)]
struct Config(RunConfig);

#[pymethods]
impl Config {
    /// Keyword arguments are applied through `set`.
    #[new]
    #[pyo3(signature = (**options))]
    fn new(options: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let mut cfg = Config(RunConfig::default());
        if let Some(options) = options {
            for (k, v) in options.iter() {
                cfg.set(&k.extract::<String>()?, &v.str()?.to_string().to_lowercase())?;
            }
        }
        Ok(cfg)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        RunConfig::from_file(&path).map(Config).map_err(to_py)
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.0.set(key, value).map_err(to_py)
    }

    fn validate(&self) -> PyResult<()> {
        self.0.validate().map_err(to_py)
    }

    #[getter]
    fn beams(&self) -> usize {
        self.0.beams
    }

    #[getter]
    fn multiscan(&self) -> usize {
        self.0.multiscan
    }

    #[getter]
    fn cell_size(&self) -> f64 {
        self.0.cell_size
    }

    #[getter]
    fn kernel(&self) -> String {
        self.0.kernel.to_string()
    }

    #[getter]
    fn format(&self) -> String {
        self.0.format.to_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

/// Scans loaded from a log, or simulated with their ground truth.
#[pyclass(module = "sparse_slam")]
struct Log {
    scans: Vec<Scan>,
    truth: Option<slam::sim::SimulatedLog>,
}

#[pymethods]
impl Log {
    /// Reads the log named by `path` (ignored for synthetic input) and
    /// reduces it to the configured beams and range cap.
    #[staticmethod]
    #[pyo3(signature = (config, path=None))]
    fn load(config: &Config, path: Option<PathBuf>) -> PyResult<Self> {
        let input = slam::pipeline::load_input(&config.0, path.as_deref()).map_err(to_py)?;
        Ok(Log {
            scans: input.scans,
            truth: input.truth,
        })
    }

    fn __len__(&self) -> usize {
        self.scans.len()
    }

    /// `(t, x, y, theta)` per scan, when the log is simulated.
    fn ground_truth(&self) -> Option<Vec<Row>> {
        self.truth.as_ref().map(|t| rows(&t.truth))
    }

    fn dead_reckoning(&self) -> Vec<Row> {
        self.scans
            .iter()
            .map(|s| (s.timestamp, s.odom_pose.x, s.odom_pose.y, s.odom_pose.theta))
            .collect()
    }

    /// `count` ground-truth relations between random pose pairs as
    /// `(t1, t2, dx, dy, dtheta)`.
    fn random_relations(&self, count: usize, seed: u64) -> PyResult<Vec<RelationRow>> {
        let truth = self
            .truth
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("only simulated logs carry ground truth"))?;
        Ok(truth
            .random_relations(count, seed)
            .iter()
            .map(|r| (r.t1, r.t2, r.delta.dx, r.delta.dy, r.delta.dtheta))
            .collect())
    }
}

#[pyclass(module = "sparse_slam")]
struct RunResult(slam::pipeline::RunOutput);

#[pymethods]
impl RunResult {
    /// Optimized `(t, x, y, theta)` per scan.
    #[getter]
    fn trajectory(&self) -> Vec<Row> {
        rows(&self.0.trajectory)
    }

    #[getter]
    fn frontend_trajectory(&self) -> Vec<Row> {
        rows(&self.0.frontend_trajectory)
    }

    #[getter]
    fn scans(&self) -> usize {
        self.0.summary.scans
    }

    #[getter]
    fn loops(&self) -> usize {
        self.0.summary.loops
    }

    #[getter]
    fn rollbacks(&self) -> usize {
        self.0.summary.rollbacks
    }

    #[getter]
    fn submaps(&self) -> usize {
        self.0.summary.submaps
    }

    /// `(frontend mean, frontend max, backend max, data interval)` in seconds.
    #[getter]
    fn runtime(&self) -> (f64, f64, f64, f64) {
        let r = &self.0.runtime;
        (r.frontend_mean, r.frontend_max, r.backend_max, r.data_interval_mean)
    }

    /// Occupancy probabilities row by row, `None` for unknown cells.
    fn map(&self) -> Vec<Vec<Option<f64>>> {
        let image = self.0.map.to_image();
        image.cells.chunks(image.width.max(1)).map(|r| r.to_vec()).collect()
    }

    /// The map as a binary PGM.
    fn map_pgm<'py>(&self, py: Python<'py>) -> Bound<'py, pyo3::types::PyBytes> {
        pyo3::types::PyBytes::new(py, &write_pgm(&self.0.map.to_image()))
    }
}

#[pyfunction]
fn run(py: Python<'_>, config: &Config, log: &Log) -> PyResult<RunResult> {
    let cfg = config.0.clone();
    let scans = &log.scans;
    py.detach(|| slam::pipeline::run(&cfg, scans))
        .map(RunResult)
        .map_err(to_py)
}

/// Reads `t1 t2 dx dy dtheta` relation lines.
#[pyfunction]
fn load_relations(path: PathBuf) -> PyResult<Vec<RelationRow>> {
    let file = fs::File::open(&path).map_err(|e| to_py(Error::io(&path, e)))?;
    let relations = parse_relations(BufReader::new(file)).map_err(to_py)?;
    Ok(relations
        .iter()
        .map(|r| (r.t1, r.t2, r.delta.dx, r.delta.dy, r.delta.dtheta))
        .collect())
}

/// Relation error of a `(t, x, y, theta)` trajectory: translational mean and
/// std in metres, rotational mean and std in degrees.
#[pyfunction]
fn evaluate(trajectory: Vec<Row>, relations: Vec<RelationRow>) -> PyResult<(f64, f64, f64, f64)> {
    let traj: Vec<_> = trajectory
        .into_iter()
        .map(|(t, x, y, th)| (t, slam::geometry::Pose2::new(x, y, th)))
        .collect();
    let rel: Vec<Relation> = relations
        .into_iter()
        .map(|(t1, t2, dx, dy, dth)| Relation {
            t1,
            t2,
            delta: MotionDelta::new(dx, dy, dth),
        })
        .collect();
    let report = slam::metrics::evaluate(&traj, &rel).map_err(to_py)?;
    let rot = report.rotational.map_or((f64::NAN, f64::NAN), |r| (r.mean, r.std));
    Ok((report.translational.mean, report.translational.std, rot.0, rot.1))
}

#[pymodule]
#[pyo3(name = "sparse_slam")]
fn sparse_slam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Pose2>()?;
    m.add_class::<Config>()?;
    m.add_class::<Log>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(load_relations, m)?)?;
    Ok(())
}
