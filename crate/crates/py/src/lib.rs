//! Python bindings. Configs and priors travel as JSON strings in the same
//! shape the command-line tool reads; results come back as dicts.

use fnch_core::abc::{run_gibbs_abc, AbcConfig};
use fnch_core::data::{bundled, load_cohort_tables};
use fnch_core::fnch::{log_pmf_multivariate, log_pmf_univariate};
use fnch_core::mcmc::{run_multivariate_posterior, run_univariate_posterior, UnivariateData, UnivariatePriors};
use fnch_core::output::RunSummary;
use fnch_core::pipeline::{run_all, simulation_study, PipelineConfig, SimStudyConfig};
use fnch_core::rng::master_stream;
use fnch_core::summary::summarize;
use fnch_core::{ChainDraws, Error, FnchParams, McmcConfig, Prior, PriorSpec, UnivariateFnch};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| to_py(e.into()))
}

fn parse_or_default<T: serde::de::DeserializeOwned + Default>(text: Option<&str>) -> PyResult<T> {
    text.map_or_else(|| Ok(T::default()), parse)
}

/// Serializable value to a Python object via the json module.
fn to_object<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| to_py(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn log_odds(w: Option<f64>, log_w: Option<f64>) -> PyResult<f64> {
    match (w, log_w) {
        (Some(w), None) if w > 0.0 && w.is_finite() => Ok(w.ln()),
        (Some(w), None) => Err(PyValueError::new_err(format!("odds ratio must be positive, got {w}"))),
        (None, Some(lw)) => Ok(lw),
        (None, None) => Ok(0.0),
        (Some(_), Some(_)) => Err(PyValueError::new_err("give w or log_w, not both")),
    }
}

/// Two-group pmf at `y`.
#[pyfunction]
#[pyo3(signature = (m1, m2, n, y, w=None, log_w=None))]
fn pmf(m1: i64, m2: i64, n: i64, y: i64, w: Option<f64>, log_w: Option<f64>) -> PyResult<f64> {
    Ok(log_pmf_univariate(m1, m2, n, log_odds(w, log_w)?, y).map_err(to_py)?.exp())
}

#[pyfunction]
#[pyo3(signature = (m1, m2, n, y, w=None, log_w=None))]
fn log_pmf(m1: i64, m2: i64, n: i64, y: i64, w: Option<f64>, log_w: Option<f64>) -> PyResult<f64> {
    log_pmf_univariate(m1, m2, n, log_odds(w, log_w)?, y).map_err(to_py)
}

/// Multivariate log-pmf of the composition `y`; the total is `sum(y)`.
#[pyfunction]
#[pyo3(signature = (m, y, log_w=None))]
fn log_pmf_groups(m: Vec<u64>, y: Vec<u64>, log_w: Option<Vec<f64>>) -> PyResult<f64> {
    let lw = log_w.unwrap_or_else(|| vec![0.0; m.len()]);
    let params = FnchParams::new(m, y.iter().sum(), lw).map_err(to_py)?;
    log_pmf_multivariate(&params, &y).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (m1, m2, n, size=1, seed=0, w=None, log_w=None))]
fn sample(m1: u64, m2: u64, n: u64, size: usize, seed: u64, w: Option<f64>, log_w: Option<f64>) -> PyResult<Vec<u64>> {
    let dist = UnivariateFnch::new(m1, m2, n, log_odds(w, log_w)?).map_err(to_py)?;
    let mut rng = master_stream(seed);
    Ok((0..size).map(|_| dist.sample(&mut rng)).collect())
}

/// Prior distribution built from a JSON spec such as
/// `{"family": "discrete_uniform", "a": 3, "b": 8}`.
#[pyclass(name = "Prior")]
struct PyPrior(Prior);

#[pymethods]
impl PyPrior {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        let spec: PriorSpec = parse(spec)?;
        Ok(Self(Prior::new(spec).map_err(to_py)?))
    }

    fn log_density(&self, x: f64) -> f64 {
        self.0.log_density(x)
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn sd(&self) -> f64 {
        self.0.sd()
    }

    fn quantile(&self, p: f64) -> PyResult<f64> {
        self.0.quantile(p).map_err(to_py)
    }

    #[pyo3(signature = (size=1, seed=0))]
    fn sample(&self, size: usize, seed: u64) -> Vec<f64> {
        let mut rng = master_stream(seed);
        (0..size).map(|_| self.0.sample(&mut rng)).collect()
    }

    fn __repr__(&self) -> String {
        format!("Prior({})", serde_json::to_string(self.0.spec()).unwrap_or_default())
    }
}

/// Posterior draws with named columns.
#[pyclass(name = "Draws")]
struct PyDraws(ChainDraws);

#[pymethods]
impl PyDraws {
    #[getter]
    fn names(&self) -> Vec<String> {
        self.0.names.clone()
    }

    #[getter]
    fn acceptance(&self) -> Vec<f64> {
        self.0.acceptance.clone()
    }

    fn __len__(&self) -> usize {
        self.0.n_draws()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        self.0
            .column(name)
            .ok_or_else(|| PyValueError::new_err(format!("no column '{name}'")))
    }

    /// `{parameter: summary dict}` at the given HPD level.
    #[pyo3(signature = (level=0.95))]
    fn summary<'py>(&self, py: Python<'py>, level: f64) -> PyResult<Bound<'py, PyDict>> {
        let out = PyDict::new(py);
        for name in &self.0.names {
            let s = summarize(&self.0.column(name).unwrap_or_default(), level).map_err(to_py)?;
            out.set_item(name, to_object(py, &s)?)?;
        }
        Ok(out)
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.0.write_csv(&mut buf).map_err(to_py)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// Single-list model: `priors` is `{"size": .., "total": .., "log_odds": .., "tie_size_to_total": bool}`.
#[pyfunction]
#[pyo3(signature = (employed, unemployed, priors, mcmc=None))]
fn fit_univariate(py: Python<'_>, employed: u64, unemployed: u64, priors: &str, mcmc: Option<&str>) -> PyResult<PyDraws> {
    let priors: UnivariatePriors = parse(priors)?;
    let cfg: McmcConfig = parse_or_default(mcmc)?;
    let data = UnivariateData { employed, unemployed };
    let d = py.detach(|| run_univariate_posterior(data, &priors, &cfg)).map_err(to_py)?;
    Ok(PyDraws(d))
}

/// Group sizes with fixed weights; `priors` is a JSON list of prior specs.
#[pyfunction]
#[pyo3(signature = (y, priors, log_w, mcmc=None))]
fn fit_mcmc(py: Python<'_>, y: Vec<u64>, priors: &str, log_w: Vec<f64>, mcmc: Option<&str>) -> PyResult<PyDraws> {
    let priors: Vec<PriorSpec> = parse(priors)?;
    let cfg: McmcConfig = parse_or_default(mcmc)?;
    let d = py.detach(|| run_multivariate_posterior(&y, &priors, &log_w, &cfg)).map_err(to_py)?;
    Ok(PyDraws(d))
}

/// Gibbs-ABC counterpart of [`fit_mcmc`]. A stall raises RuntimeError.
#[pyfunction]
#[pyo3(signature = (y, priors, log_w, abc=None))]
fn fit_abc(py: Python<'_>, y: Vec<u64>, priors: &str, log_w: Vec<f64>, abc: Option<&str>) -> PyResult<PyDraws> {
    let priors: Vec<PriorSpec> = parse(priors)?;
    let cfg: AbcConfig = parse_or_default(abc)?;
    let (d, _) = py.detach(|| run_gibbs_abc(&y, &priors, &log_w, &cfg)).map_err(to_py)?;
    Ok(PyDraws(d))
}

/// Full case-study pipeline; returns the draw-free results dict.
#[pyfunction]
#[pyo3(signature = (config=None, data=None))]
fn run_pipeline<'py>(py: Python<'py>, config: Option<&str>, data: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let cfg: PipelineConfig = parse_or_default(config)?;
    let tables = match data {
        Some(p) => load_cohort_tables(std::path::Path::new(p)),
        None => bundled(),
    }
    .map_err(to_py)?;
    let run = py.detach(|| run_all(&tables, &cfg)).map_err(to_py)?;
    to_object(py, &RunSummary::from(&run))
}

/// Coverage study; returns `{method: {parameter: frequency}}`.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn simulate<'py>(py: Python<'py>, config: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let cfg: SimStudyConfig = parse_or_default(config)?;
    let report = py.detach(|| simulation_study(&cfg)).map_err(to_py)?;
    let out = PyDict::new(py);
    for m in &report.methods {
        let inner = PyDict::new(py);
        for (p, c) in m.parameters.iter().zip(&m.counts) {
            inner.set_item(p, c.frequency())?;
        }
        out.set_item(&m.method, inner)?;
    }
    Ok(out)
}

#[pymodule]
fn fnch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(pmf, m)?)?;
    m.add_function(wrap_pyfunction!(log_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(log_pmf_groups, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(fit_univariate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_mcmc, m)?)?;
    m.add_function(wrap_pyfunction!(fit_abc, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_class::<PyPrior>()?;
    m.add_class::<PyDraws>()?;
    Ok(())
}
