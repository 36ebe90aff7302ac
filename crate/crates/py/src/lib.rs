//! Python bindings. Configurations cross the boundary as keyword arguments and
//! results come back as plain dicts.

use fdcr_core::channel::{db_to_linear, linear_to_db, SystemConfig};
use fdcr_core::experiments::{run_scenario, run_trial as core_run_trial, trial_rng, write_outputs, Scenario, ScenarioResult, Scheme};
use fdcr_core::linalg::{HermitianMatrix, C64};
use fdcr_core::oracle::worst_case_quadratic as core_worst_case;
use fdcr_core::problem::hd_sinr_target as core_hd_target;
use fdcr_core::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidConfig(_) => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

/// Starts from `base` and overrides the fields named in `kwargs`.
fn merged<T: Serialize + DeserializeOwned>(base: T, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<T> {
    let Some(kw) = kwargs else { return Ok(base) };
    let py = kw.py();
    let text: String = py.import("json")?.call_method1("dumps", (kw,))?.extract()?;
    let over: serde_json::Value = serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let mut value = serde_json::to_value(base).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    if let (Some(dst), Some(src)) = (value.as_object_mut(), over.as_object()) {
        for (k, v) in src {
            if let (Some(serde_json::Value::Object(d)), serde_json::Value::Object(s)) = (dst.get_mut(k), v) {
                d.extend(s.clone());
            } else {
                dst.insert(k.clone(), v.clone());
            }
        }
    }
    serde_json::from_value(value).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn schemes(names: Option<Vec<String>>) -> PyResult<Vec<Scheme>> {
    match names {
        None => Ok(Scheme::ALL.to_vec()),
        Some(v) => v
            .iter()
            .map(|s| Scheme::parse(s).ok_or_else(|| PyValueError::new_err(format!("unknown scheme `{s}`"))))
            .collect(),
    }
}

/// System constants. Keyword arguments override the defaults, with SINR
/// targets given linearly (`gamma_dl`, `gamma_ul`).
#[pyclass(name = "SystemConfig", module = "fdcr", from_py_object)]
#[derive(Clone)]
struct PySystemConfig {
    inner: SystemConfig,
}

#[pymethods]
impl PySystemConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let inner = merged(SystemConfig::default(), kwargs)?;
        inner.validate().map_err(err)?;
        Ok(PySystemConfig { inner })
    }

    #[getter]
    fn n_t(&self) -> usize {
        self.inner.n_t
    }

    #[getter]
    fn gamma_dl(&self) -> f64 {
        self.inner.gamma_dl
    }

    #[getter]
    fn gamma_ul(&self) -> f64 {
        self.inner.gamma_ul
    }

    #[getter]
    fn kappa2(&self) -> f64 {
        self.inner.kappa2
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemConfig(n_t={}, k={}, j={}, r={}, gamma_dl={}, gamma_ul={}, kappa2={})",
            self.inner.n_t, self.inner.k, self.inner.j, self.inner.r, self.inner.gamma_dl, self.inner.gamma_ul, self.inner.kappa2
        )
    }
}

/// A Monte Carlo sweep.
#[pyclass(name = "Scenario", module = "fdcr", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: Scenario,
}

impl PyScenario {
    fn checked(inner: Scenario) -> PyResult<Self> {
        inner.validate().map_err(err)?;
        Ok(PyScenario { inner })
    }
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        Self::checked(merged(Scenario::fig2(), kwargs)?)
    }

    #[staticmethod]
    #[pyo3(signature = (**kwargs))]
    fn fig2(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        Self::checked(merged(Scenario::fig2(), kwargs)?)
    }

    #[staticmethod]
    #[pyo3(signature = (**kwargs))]
    fn fig3(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        Self::checked(merged(Scenario::fig3(), kwargs)?)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Self::checked(s)
    }

    /// System configuration at one sweep point.
    fn config(&self, nt: usize, value: f64) -> PySystemConfig {
        PySystemConfig { inner: self.inner.config(nt, value) }
    }

    #[pyo3(signature = (jobs = 0))]
    fn run(&self, py: Python<'_>, jobs: usize) -> PyResult<PyScenarioResult> {
        let s = self.inner.clone();
        let inner = py.detach(move || run_scenario(&s, jobs)).map_err(err)?;
        Ok(PyScenarioResult { inner })
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, axis={}, values={:?}, nt={:?}, trials={}, seed={})",
            self.inner.name,
            self.inner.axis.name(),
            self.inner.values,
            self.inner.nt,
            self.inner.trials,
            self.inner.seed
        )
    }
}

#[pyclass(name = "ScenarioResult", module = "fdcr")]
struct PyScenarioResult {
    inner: ScenarioResult,
}

#[pymethods]
impl PyScenarioResult {
    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    /// One dict per (scheme, nt, axis value).
    fn points<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.points)
    }

    /// Per-trial leakage in watts, `None` where the trial was not feasible.
    fn trial_leakages(&self, scheme: &str, nt: usize, value: f64) -> PyResult<Vec<Option<f64>>> {
        let s = Scheme::parse(scheme).ok_or_else(|| PyValueError::new_err(format!("unknown scheme `{scheme}`")))?;
        Ok(self.inner.trial_leakages(s, nt, value))
    }

    fn audit_failures(&self) -> usize {
        self.inner.audit_failures()
    }

    /// Writes the CSV to `path` and the manifest next to it.
    #[pyo3(signature = (path, jobs = 0))]
    fn write(&self, path: std::path::PathBuf, jobs: usize) -> PyResult<()> {
        write_outputs(&self.inner, &path, jobs).map_err(err)
    }
}

/// Draws and solves trial `trial` of `seed` under every requested scheme.
#[pyfunction]
#[pyo3(signature = (config, seed, trial = 0, schemes = None))]
fn run_trial<'py>(
    py: Python<'py>,
    config: &PySystemConfig,
    seed: u64,
    trial: u64,
    schemes: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyAny>> {
    let list = self::schemes(schemes)?;
    let cfg = config.inner.clone();
    let settings = Scenario::fig2().solver;
    let res = py.detach(move || core_run_trial(&cfg, &mut trial_rng(seed, trial), &list, &settings)).map_err(err)?;
    to_py(py, &res)
}

/// Exact `max ‖x‖ ≤ eps of (x̂ + x)ᴴ A (x̂ + x)`. Only the upper triangle of `a` is read.
#[pyfunction]
fn worst_case_quadratic(a: Vec<Vec<C64>>, x_hat: Vec<C64>, eps: f64) -> PyResult<f64> {
    let n = x_hat.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("a must be square with the length of x_hat"));
    }
    let m = HermitianMatrix::from_upper_fn(n, |i, j| a[i][j]);
    core_worst_case(&m, &x_hat, eps).map(|w| w.value).map_err(err)
}

/// Half-duplex SINR target with the same rate as full-duplex target `gamma`.
#[pyfunction]
fn hd_sinr_target(gamma: f64) -> f64 {
    core_hd_target(gamma)
}

#[pyfunction(name = "db_to_linear")]
fn py_db_to_linear(db: f64) -> f64 {
    db_to_linear(db)
}

#[pyfunction(name = "linear_to_db")]
fn py_linear_to_db(x: f64) -> f64 {
    linear_to_db(x)
}

/// Runs the built-in checks; returns `(name, passed, detail)` tuples.
#[pyfunction]
#[pyo3(signature = (seed = 1))]
fn verify(py: Python<'_>, seed: u64) -> PyResult<Vec<(String, bool, String)>> {
    let checks = py.detach(move || fdcr_core::verify::run_checks(seed)).map_err(err)?;
    Ok(checks.into_iter().map(|c| (c.name.to_string(), c.pass, c.detail)).collect())
}

#[pymodule]
fn fdcr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemConfig>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyScenarioResult>()?;
    m.add_function(wrap_pyfunction!(run_trial, m)?)?;
    m.add_function(wrap_pyfunction!(worst_case_quadratic, m)?)?;
    m.add_function(wrap_pyfunction!(hd_sinr_target, m)?)?;
    m.add_function(wrap_pyfunction!(py_db_to_linear, m)?)?;
    m.add_function(wrap_pyfunction!(py_linear_to_db, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
