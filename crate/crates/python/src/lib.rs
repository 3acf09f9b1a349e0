//! Python bindings. Structured values cross the boundary as JSON strings
//! so the Python side sees exactly the documents the CLI writes.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use jd_bermudan::analytic::{self, EuroPricerConfig};
use jd_bermudan::model;
use jd_bermudan::{BoundEstimate, Error, ExperimentConfig, TableOptions};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Market and contract parameters. Defaults are the single-asset reference
/// market with `lambda = 1, X0 = 40`.
#[pyclass(name = "ModelParams", from_py_object)]
#[derive(Clone)]
pub struct PyModelParams {
    inner: model::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (n=1, lambda_=1.0, x0=40.0))]
    fn new(n: usize, lambda_: f64, x0: f64) -> PyResult<Self> {
        let inner = model::ModelParams::table(n, lambda_, x0);
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: model::ModelParams = serde_json::from_str(text).map_err(|e| to_py(e.into()))?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| to_py(e.into()))
    }

    #[getter]
    fn n_assets(&self) -> usize {
        self.inner.n_assets()
    }

    #[getter]
    fn x0(&self) -> Vec<f64> {
        self.inner.x0.clone()
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    fn payoff(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.inner.n_assets() {
            return Err(PyValueError::new_err(
                "state dimension does not match n_assets",
            ));
        }
        Ok(self.inner.payoff(&x))
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelParams(n={}, lambda_={}, x0={:?})",
            self.inner.n_assets(),
            self.inner.lambda,
            self.inner.x0
        )
    }
}

/// One bound estimate of an experiment report.
#[pyclass(name = "BoundEstimate", frozen, get_all)]
pub struct PyBoundEstimate {
    kind: String,
    mean: f64,
    stderr: f64,
    ci95_halfwidth: f64,
    n_paths: usize,
    seed: u64,
}

impl From<&BoundEstimate> for PyBoundEstimate {
    fn from(e: &BoundEstimate) -> Self {
        Self {
            kind: e.kind.label().to_string(),
            mean: e.mean,
            stderr: e.stderr,
            ci95_halfwidth: e.ci95_halfwidth,
            n_paths: e.n_paths,
            seed: e.seed,
        }
    }
}

#[pymethods]
impl PyBoundEstimate {
    fn __repr__(&self) -> String {
        format!(
            "BoundEstimate({} {:.4} +/- {:.4})",
            self.kind, self.mean, self.ci95_halfwidth
        )
    }
}

/// Non-jump European min-put value at time `t`.
#[pyfunction]
#[pyo3(signature = (params, x, t=0.0))]
fn bs_min_put(params: &PyModelParams, x: Vec<f64>, t: f64) -> PyResult<f64> {
    let p = &params.inner;
    analytic::bs_min_put(t, &x, p.maturity, p, &EuroPricerConfig::default()).map_err(to_py)
}

/// Derivative of [`bs_min_put`] with respect to asset `asset`.
#[pyfunction]
#[pyo3(signature = (params, x, asset, t=0.0))]
fn bs_min_put_delta(params: &PyModelParams, x: Vec<f64>, asset: usize, t: f64) -> PyResult<f64> {
    let p = &params.inner;
    analytic::bs_min_put_delta(t, &x, p.maturity, asset, p, &EuroPricerConfig::default())
        .map_err(to_py)
}

/// Single-asset European put under the jump model.
#[pyfunction]
#[pyo3(signature = (params, x, t=0.0))]
fn merton_put(params: &PyModelParams, x: f64, t: f64) -> PyResult<f64> {
    let p = &params.inner;
    analytic::merton_put_1d(t, x, p.maturity, p, &EuroPricerConfig::default()).map_err(to_py)
}

/// Default experiment configuration as JSON.
#[pyfunction]
fn default_config() -> PyResult<String> {
    serde_json::to_string_pretty(&ExperimentConfig::default()).map_err(|e| to_py(e.into()))
}

/// Runs the experiment described by `config_json` and returns the report
/// as JSON. The GIL is released while sampling.
#[pyfunction]
#[pyo3(signature = (config_json="{}"))]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    py.detach(|| jd_bermudan::run_experiment(&cfg).and_then(|r| r.to_json()))
        .map_err(to_py)
}

/// Runs an experiment and returns only its estimates.
#[pyfunction]
#[pyo3(signature = (config_json="{}"))]
fn estimate_bounds(py: Python<'_>, config_json: &str) -> PyResult<Vec<PyBoundEstimate>> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    let report = py
        .detach(|| jd_bermudan::run_experiment(&cfg))
        .map_err(to_py)?;
    Ok(report.estimates.iter().map(PyBoundEstimate::from).collect())
}

/// Recomputes table `table_id` and returns it as CSV.
#[pyfunction]
#[pyo3(signature = (table_id, scale=1.0, include_n2=false, seed=None))]
fn reproduce_table(
    py: Python<'_>,
    table_id: &str,
    scale: f64,
    include_n2: bool,
    seed: Option<u64>,
) -> PyResult<String> {
    let opts = TableOptions {
        scale,
        include_n2,
        seed: seed.unwrap_or(TableOptions::default().seed),
    };
    py.detach(|| jd_bermudan::reproduce_table(table_id, &opts).and_then(|t| t.to_csv()))
        .map_err(to_py)
}

#[pymodule]
pub fn jd_bermudan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyBoundEstimate>()?;
    m.add_function(wrap_pyfunction!(bs_min_put, m)?)?;
    m.add_function(wrap_pyfunction!(bs_min_put_delta, m)?)?;
    m.add_function(wrap_pyfunction!(merton_put, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce_table, m)?)?;
    Ok(())
}
