//! Python module `hlsbench`. Structured values cross the boundary as plain
//! dicts and lists (the JSON form of the Rust types).

use std::path::PathBuf;

use ::hlsbench::kernel::{build_design_space, default_config, Kernel, PragmaConfig};
use ::hlsbench::oracle::{run_dse, DseStrategy, Oracle, OracleConstants};
use ::hlsbench::synthgen::{self, GenSpec, SynthInput, SynthLimits};
use ::hlsbench::workbench::{self, ExperimentConfig, Stage};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(hlsbench, HlsbenchError, PyException);

fn err(e: ::hlsbench::Error) -> PyErr {
    HlsbenchError::new_err((e.kind(), e.to_string(), e.exit_code()))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| HlsbenchError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = value.py().import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| HlsbenchError::new_err(("invalid_argument", e.to_string(), 1)))
}

fn oracle() -> Oracle {
    Oracle::new(OracleConstants::default())
}

/// Domain tags accepted by `generate_kernel`.
#[pyfunction]
fn domains() -> Vec<&'static str> {
    synthgen::DOMAINS.iter().map(|(d, _)| *d).collect()
}

/// Draw a kernel from the parametric generator. `spec` takes the keys
/// `seed`, `num_loops`, `memory_bytes`, `domain` and `multi_function`.
#[pyfunction]
#[pyo3(signature = (spec=None))]
fn generate_kernel<'py>(py: Python<'py>, spec: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let spec: GenSpec = match spec {
        Some(s) => from_py(s)?,
        None => GenSpec::default(),
    };
    to_py(py, &synthgen::generate_parametric(&spec).map_err(err)?)
}

#[pyfunction]
fn render_c(kernel: &Bound<'_, PyAny>) -> PyResult<String> {
    Ok(synthgen::render_c(&from_py::<Kernel>(kernel)?))
}

/// Synthesizability verdict for C source: `{"pass": bool, "reasons": [...]}`.
#[pyfunction]
fn check_source<'py>(py: Python<'py>, source: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &synthgen::check_synthesizable(SynthInput::Text(source), &SynthLimits::default()),
    )
}

#[pyfunction]
fn design_space<'py>(py: Python<'py>, kernel: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &build_design_space(&from_py::<Kernel>(kernel)?))
}

#[pyfunction]
fn default_design<'py>(py: Python<'py>, kernel: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &default_config(&build_design_space(&from_py::<Kernel>(kernel)?)))
}

/// Oracle cost report for one design.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, kernel: &Bound<'py, PyAny>, config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let kernel: Kernel = from_py(kernel)?;
    let config: PragmaConfig = from_py(config)?;
    to_py(py, &oracle().evaluate(&kernel, &config).map_err(err)?)
}

/// Oracle-labeled designs from a design-space search.
#[pyfunction]
#[pyo3(signature = (kernel, budget, strategy="random", seed=0))]
fn dse<'py>(py: Python<'py>, kernel: &Bound<'py, PyAny>, budget: usize, strategy: &str, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let kernel: Kernel = from_py(kernel)?;
    let strategy: DseStrategy = serde_json::from_value(serde_json::Value::String(strategy.into()))
        .map_err(|_| HlsbenchError::new_err(("invalid_argument", format!("unknown strategy {strategy:?}"), 1)))?;
    to_py(py, &run_dse(&oracle(), &kernel, budget, strategy, seed).map_err(err)?)
}

#[pyfunction]
fn geomean(values: Vec<f64>) -> f64 {
    ::hlsbench::train::geomean(&values)
}

/// Re-check a dataset directory; returns its manifest.
#[pyfunction]
fn validate_dataset<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &workbench::validate_dataset(&path).map_err(err)?)
}

/// Staged experiment runner over a directory of artifacts.
#[pyclass(unsendable)]
struct Workbench {
    inner: workbench::Workbench,
}

#[pymethods]
impl Workbench {
    #[new]
    #[pyo3(signature = (out, config=None, seed=None, input=None))]
    fn new(out: PathBuf, config: Option<&str>, seed: Option<u64>, input: Option<PathBuf>) -> PyResult<Self> {
        let config = match config {
            Some(text) => ExperimentConfig::from_toml_str(text).map_err(err)?,
            None => ExperimentConfig::default(),
        };
        Ok(Self {
            inner: workbench::Workbench::new(config, seed, input, out).map_err(err)?,
        })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed()
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.inner.config_hash()
    }

    /// Run one stage by name, e.g. `"train-ensemble"`.
    fn run(&self, stage: &str) -> PyResult<()> {
        let stage: Stage = stage.parse().map_err(err)?;
        self.inner.run(stage).map_err(err)
    }

    fn eval<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.eval().map_err(err)?)
    }

    fn optimize<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.optimize().map_err(err)?)
    }

    /// The report table as CSV text.
    fn report(&self) -> PyResult<String> {
        self.inner.report().map_err(err)
    }
}

#[pymodule]
#[pyo3(name = "hlsbench")]
fn hlsbench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("HlsbenchError", m.py().get_type::<HlsbenchError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(domains, m)?)?;
    m.add_function(wrap_pyfunction!(generate_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(render_c, m)?)?;
    m.add_function(wrap_pyfunction!(check_source, m)?)?;
    m.add_function(wrap_pyfunction!(design_space, m)?)?;
    m.add_function(wrap_pyfunction!(default_design, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(dse, m)?)?;
    m.add_function(wrap_pyfunction!(geomean, m)?)?;
    m.add_function(wrap_pyfunction!(validate_dataset, m)?)?;
    m.add_class::<Workbench>()?;
    Ok(())
}
