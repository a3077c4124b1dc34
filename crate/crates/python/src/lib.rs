//! Python module `pyfdacov`.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

use fdacov::bandwidth::{Regime, Target};
use fdacov::cli::bandwidth_report;
use fdacov::data::{load_panel, PanelFormat, PanelSample};
use fdacov::error::FdaError;
use fdacov::inference::{normal_quantile, Analysis, CiMethod, PipelineConfig};
use fdacov::kernels::{KernelFamily, KernelSpec};
use fdacov::llk;
use fdacov::simulation::{DgpId, DgpSpec};

create_exception!(pyfdacov, FdaException, PyException, "Error raised by the estimation core.");

fn to_py(err: FdaError) -> PyErr {
    FdaException::new_err(format!("{}: {err}", err.kind()))
}

fn parse<T: std::str::FromStr<Err = FdaError>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Serializes through JSON so results arrive as plain dicts and lists.
fn to_object<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| FdaException::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A balanced panel: `n` curves with `m` observations each.
#[pyclass(name = "Panel", frozen)]
pub struct PyPanel {
    inner: PanelSample,
}

#[pymethods]
impl PyPanel {
    /// `y` and `u` are row-major `n*m` sequences, `z` has one value per curve.
    #[new]
    fn new(n: usize, m: usize, y: Vec<f64>, u: Vec<f64>, z: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: PanelSample::new(n, m, y, u, z).map_err(to_py)?,
        })
    }

    /// Reads a long CSV with columns `curve_id,u,z,y`.
    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: load_panel(path, PanelFormat::LongCsv).map_err(to_py)?,
        })
    }

    /// Draws a panel from synthetic design 1 or 2.
    #[staticmethod]
    fn simulate(dgp: &str, n: usize, m: usize, seed: u64) -> PyResult<Self> {
        let id: DgpId = parse(dgp)?;
        Ok(Self {
            inner: DgpSpec::new(id, n, m).generate(seed),
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Panel(n={}, m={})", self.inner.n(), self.inner.m())
    }
}

/// Pilot fits, densities and functionals of one panel; bandwidths and
/// intervals are computed on demand.
#[pyclass(name = "Analysis", frozen)]
pub struct PyAnalysis {
    inner: Analysis,
}

#[pymethods]
impl PyAnalysis {
    #[new]
    #[pyo3(signature = (panel, kernel = "gaussian", seed = 0))]
    fn new(py: Python<'_>, panel: &PyPanel, kernel: &str, seed: u64) -> PyResult<Self> {
        let family: KernelFamily = parse(kernel)?;
        let config = PipelineConfig {
            kernel: KernelSpec::new(family),
            seed,
            ..PipelineConfig::default()
        };
        let sample = panel.inner.clone();
        let inner = py.detach(|| Analysis::new(sample, config)).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// `target` is `mean` or `covariance`, `regime` is `sparse` or `dense`.
    fn bandwidths(&self, py: Python<'_>, target: &str, regime: &str) -> PyResult<Py<PyAny>> {
        let target = match target.to_ascii_lowercase().as_str() {
            "mean" => Target::Mean,
            "covariance" | "cov" => Target::Covariance,
            other => return Err(to_py(FdaError::Config(format!("unknown target '{other}'")))),
        };
        let regime: Regime = parse(regime)?;
        let b = self.inner.bandwidths(target, regime).map_err(to_py)?;
        to_object(py, &b)
    }

    fn bandwidth_report(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, &bandwidth_report(&self.inner).map_err(to_py)?)
    }

    #[pyo3(signature = (u, z, regime = "dense"))]
    fn mean(&self, u: f64, z: f64, regime: &str) -> PyResult<f64> {
        let h = self
            .inner
            .bandwidths(Target::Mean, parse(regime)?)
            .map_err(to_py)?;
        self.inner.mean_at(u, z, &h).map_err(to_py)
    }

    #[pyo3(signature = (u, z, method = "dense-corrected", alpha = 0.05))]
    fn confidence_interval(&self, py: Python<'_>, u: f64, z: f64, method: &str, alpha: f64) -> PyResult<Py<PyAny>> {
        let method: CiMethod = parse(method)?;
        let ci = py
            .detach(|| self.inner.confidence_interval(u, z, method, alpha))
            .map_err(to_py)?;
        to_object(py, &ci)
    }
}

/// Local-linear mean estimate at `(u, z)` with fixed bandwidths.
#[pyfunction]
#[pyo3(signature = (panel, u, z, h_u, h_z, kernel = "gaussian"))]
fn fit_mean(panel: &PyPanel, u: f64, z: f64, h_u: f64, h_z: f64, kernel: &str) -> PyResult<f64> {
    let k = KernelSpec::new(parse(kernel)?);
    Ok(llk::fit_mean(&panel.inner, u, z, h_u, h_z, &k).map_err(to_py)?.value)
}

/// `(second moment, roughness)` of a kernel family.
#[pyfunction]
fn kernel_constants(kernel: &str) -> PyResult<(f64, f64)> {
    let k = KernelSpec::new(parse(kernel)?);
    Ok((k.nu2, k.rk))
}

#[pyfunction(name = "normal_quantile")]
fn py_normal_quantile(p: f64) -> PyResult<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(to_py(FdaError::Config(format!("probability {p} outside (0, 1)"))));
    }
    Ok(normal_quantile(p))
}

#[pymodule]
fn pyfdacov(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FdaException", m.py().get_type::<FdaException>())?;
    m.add_class::<PyPanel>()?;
    m.add_class::<PyAnalysis>()?;
    m.add_function(wrap_pyfunction!(fit_mean, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_constants, m)?)?;
    m.add_function(wrap_pyfunction!(py_normal_quantile, m)?)?;
    Ok(())
}
