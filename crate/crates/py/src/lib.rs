//! Python module `flowcoop`.

use std::path::PathBuf;
use std::sync::Arc;

use fc::artifact::{load_model, save_model};
use fc::datagen::{default_modes, generate};
use fc::gp::{GpModel, SeKernel};
use fc::harness::rms_error as rms;
use fc::pipeline::{train, PipelineConfig, TrainedModel};
use fc::planner::{barrier_value, parse_obstacles, BarrierParams, Obstacle, Planner};
use fc::session::{default_start, Session as CoreSession, SessionConfig};
use fc::trajectory::{parse_dataset_json, preprocess_with, RawPath};
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn rows(x: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    if x.iter().any(|r| r.len() != d) {
        return Err(err("rows must share a length"));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| x[i][j]))
}

/// JSON dataset of the built-in synthetic modes.
#[pyfunction]
#[pyo3(signature = (seed = 7, sample_rate_hz = 10.0))]
fn generate_dataset(seed: u64, sample_rate_hz: f64) -> PyResult<String> {
    let data = generate(&default_modes(), sample_rate_hz, seed).map_err(err)?;
    serde_json::to_string(&data).map_err(err)
}

/// Barrier cost at a clearance in millimeters.
#[pyfunction]
fn barrier_cost(d_min_mm: f64) -> f64 {
    barrier_value(d_min_mm, &BarrierParams::default())
}

#[pyfunction]
fn rms_error(predicted: Vec<Vec<f64>>, target: Vec<Vec<f64>>) -> PyResult<f64> {
    rms(&rows(predicted)?, &rows(target)?).map_err(err)
}

/// GP posterior means (one row per query) and variances.
#[pyfunction]
#[pyo3(signature = (inputs, outputs, queries, gain = 1.0, lengthscale = 1.0, noise_var = 1e-4))]
fn gp_predict(
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    queries: Vec<Vec<f64>>,
    gain: f64,
    lengthscale: f64,
    noise_var: f64,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let kernel = SeKernel::new(gain, lengthscale, noise_var).map_err(err)?;
    let gp = GpModel::fit(rows(inputs)?, rows(outputs)?, kernel).map_err(err)?;
    let preds = gp.predict_rows(&rows(queries)?).map_err(err)?;
    Ok((
        preds.iter().map(|p| p.mean.iter().copied().collect()).collect(),
        preds.iter().map(|p| p.var).collect(),
    ))
}

/// Trained flow bank, reward and planner.
#[pyclass(frozen)]
struct Model {
    inner: TrainedModel,
    planner: Arc<Planner>,
}

fn wrap(inner: TrainedModel) -> PyResult<Model> {
    let planner = Arc::new(inner.planner().map_err(err)?);
    Ok(Model { inner, planner })
}

fn raw(t: Vec<f64>, x: Vec<Vec<f64>>) -> RawPath {
    RawPath::new(t, x)
}

#[pymethods]
impl Model {
    /// Trains on a JSON dataset. `config` is an optional JSON pipeline
    /// configuration.
    #[staticmethod]
    #[pyo3(signature = (dataset_json, config = None, seed = 7))]
    fn train(py: Python<'_>, dataset_json: &str, config: Option<&str>, seed: u64) -> PyResult<Model> {
        let data = parse_dataset_json(dataset_json).map_err(err)?;
        let config = match config {
            Some(c) => PipelineConfig::from_json(c).map_err(err)?,
            None => PipelineConfig::default(),
        };
        let model = py.detach(|| train(&data, &config, seed)).map_err(err)?;
        wrap(model)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Model> {
        wrap(load_model(&path).map_err(err)?)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_model(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.bank.k()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.bank.labels.clone()
    }

    /// Descriptor of a raw human trajectory.
    fn describe(&self, t: Vec<f64>, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let traj = preprocess_with(&raw(t, x), &self.inner.config.preprocess)
            .map_err(err)?
            .trajectory;
        Ok(self.inner.bank.describe(&traj).map_err(err)?.p)
    }

    /// Plan for a raw observed human trajectory. `obstacles` is a JSON list
    /// of `{center, radius_m}`.
    #[pyo3(signature = (t, x, q_now = None, seed = 0, obstacles = None))]
    fn plan<'py>(
        &self,
        py: Python<'py>,
        t: Vec<f64>,
        x: Vec<Vec<f64>>,
        q_now: Option<Vec<f64>>,
        seed: u64,
        obstacles: Option<&str>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let obstacles: Vec<Obstacle> = match obstacles {
            Some(o) => parse_obstacles(o).map_err(err)?,
            None => Vec::new(),
        };
        let planner = Arc::clone(&self.planner);
        let preprocess = self.inner.config.preprocess.clone();
        let export = py
            .detach(|| {
                let traj = preprocess_with(&raw(t, x), &preprocess)?.trajectory;
                let q = q_now.unwrap_or_else(|| default_start(&planner));
                planner.plan(&traj, &q, seed, &obstacles).map(|p| p.export())
            })
            .map_err(err)?;
        to_py(py, &serde_json::to_value(export).map_err(err)?)
    }
}

/// Live session that re-plans synchronously when a plan is due.
#[pyclass]
struct Session {
    inner: CoreSession,
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (model, replan_period_s = 2.0, seed = 0))]
    fn new(model: &Model, replan_period_s: f64, seed: u64) -> PyResult<Self> {
        let config = SessionConfig {
            replan_period_s,
            seed,
            ..SessionConfig::default()
        };
        let inner = CoreSession::open(Arc::clone(&model.planner), model.inner.config.preprocess.clone(), config)
            .map_err(err)?;
        Ok(Session { inner })
    }

    /// Appends a point; returns whether a re-plan ran.
    fn push(&mut self, py: Python<'_>, t: f64, x: Vec<f64>) -> PyResult<bool> {
        let inner = &mut self.inner;
        let ack = py.detach(|| inner.push_and_plan(t, &x)).map_err(err)?;
        Ok(ack.replan_due)
    }

    fn state<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let s = self.inner.state().map_err(err)?;
        to_py(py, &serde_json::to_value(s).map_err(err)?)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pymodule]
fn flowcoop(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(barrier_cost, m)?)?;
    m.add_function(wrap_pyfunction!(rms_error, m)?)?;
    m.add_function(wrap_pyfunction!(gp_predict, m)?)?;
    m.add_class::<Model>()?;
    m.add_class::<Session>()?;
    Ok(())
}
