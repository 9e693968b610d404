//! Python bindings: the pattern type, the statistics, the tests with both
//! null methods, the simulators, and envelope curves.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cfspat::error::CfError;
use cfspat::inference::{self, NullMethod, RhoSpec, Tail, TestReport};
use cfspat::patterns::{self, Window};
use cfspat::statistic::Resolution;

fn to_py_err(err: CfError) -> PyErr {
    match err {
        CfError::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_tail(tail: &str) -> PyResult<Tail> {
    match tail {
        "two" | "two_sided" | "two-sided" => Ok(Tail::TwoSided),
        "upper" => Ok(Tail::Upper),
        "lower" => Ok(Tail::Lower),
        other => Err(PyValueError::new_err(format!(
            "tail must be 'two', 'upper' or 'lower', got {other:?}"
        ))),
    }
}

fn report_to_dict<'py>(py: Python<'py>, report: &TestReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("statistic", report.statistic)?;
    d.set_item("p_value", report.p_value)?;
    d.set_item(
        "tail",
        match report.tail {
            Tail::TwoSided => "two_sided",
            Tail::Upper => "upper",
            Tail::Lower => "lower",
        },
    )?;
    d.set_item(
        "method",
        match report.method {
            NullMethod::Imhof => "imhof",
            NullMethod::HighRho => "high_rho",
            NullMethod::MonteCarlo => "monte_carlo",
        },
    )?;
    match &report.rho {
        RhoSpec::Single(r) => d.set_item("rho", *r)?,
        RhoSpec::Set(rs) => d.set_item("rho", rs.clone())?,
    }
    d.set_item("n", report.n)?;
    d.set_item("dim", report.dim)?;
    if let Some(seed) = report.seed {
        d.set_item("seed", seed)?;
    }
    if let Some(rho) = report.selected_rho {
        d.set_item("selected_rho", rho)?;
    }
    Ok(d)
}

/// A point pattern in the unit cube.
#[pyclass(name = "PointPattern")]
#[derive(Clone)]
struct PyPointPattern {
    inner: patterns::PointPattern,
}

#[pymethods]
impl PyPointPattern {
    /// Build from a list of coordinate lists, e.g. [[0.2, 0.3], [0.7, 0.1]].
    #[new]
    fn new(points: Vec<Vec<f64>>) -> PyResult<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        Ok(PyPointPattern {
            inner: patterns::PointPattern::new(points, dim).map_err(to_py_err)?,
        })
    }

    /// Load a CSV file (one point per row, optional header). `window` is
    /// `(lower, upper)` in data units; the unit cube when omitted.
    #[staticmethod]
    #[pyo3(signature = (path, dim = 2, window = None))]
    fn from_csv(path: &str, dim: usize, window: Option<(Vec<f64>, Vec<f64>)>) -> PyResult<Self> {
        let file = std::fs::File::open(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let raw = patterns::load_pattern(std::io::BufReader::new(file), dim).map_err(to_py_err)?;
        let win = match window {
            Some((lo, hi)) => Window::new(lo, hi).map_err(to_py_err)?,
            None => Window::unit(dim),
        };
        Ok(PyPointPattern {
            inner: patterns::rescale_to_unit(&raw, &win).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.points().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("PointPattern(n={}, dim={})", self.inner.len(), self.inner.dim())
    }
}

/// The CF statistic with Cauchy weight at resolution rho.
#[pyfunction]
fn cf_statistic(pattern: &PyPointPattern, rho: f64) -> PyResult<f64> {
    let r = Resolution::new(rho).map_err(to_py_err)?;
    Ok(cfspat::statistic::cf_statistic(&pattern.inner, r))
}

/// Zimmerman's omega-bar-squared statistic (D = 2).
#[pyfunction]
fn omega_bar_squared(pattern: &PyPointPattern) -> PyResult<f64> {
    cfspat::statistic::omega_bar_squared(&pattern.inner).map_err(to_py_err)
}

/// CSR test at one resolution with the analytic null.
#[pyfunction]
#[pyo3(signature = (pattern, rho, tail = "two"))]
fn cf_test<'py>(
    py: Python<'py>,
    pattern: &PyPointPattern,
    rho: f64,
    tail: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let r = Resolution::new(rho).map_err(to_py_err)?;
    let report = inference::cf_test(&pattern.inner, r, parse_tail(tail)?).map_err(to_py_err)?;
    report_to_dict(py, &report)
}

/// CSR test calibrated by Monte Carlo simulation.
#[pyfunction]
#[pyo3(signature = (pattern, rho, tail = "two", reps = 20_000, seed = 0))]
fn cf_test_mc<'py>(
    py: Python<'py>,
    pattern: &PyPointPattern,
    rho: f64,
    tail: &str,
    reps: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = Resolution::new(rho).map_err(to_py_err)?;
    let report = inference::cf_test_mc(&pattern.inner, r, parse_tail(tail)?, reps, seed)
        .map_err(to_py_err)?;
    report_to_dict(py, &report)
}

/// Bonferroni omnibus test; defaults to the recommended resolution triple.
#[pyfunction]
#[pyo3(signature = (pattern, rhos = None, mc_reps = None, seed = 0))]
fn omnibus_test<'py>(
    py: Python<'py>,
    pattern: &PyPointPattern,
    rhos: Option<Vec<f64>>,
    mc_reps: Option<usize>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let rhos = rhos.unwrap_or_else(|| inference::default_omnibus_rhos(pattern.inner.len()).to_vec());
    let report = match mc_reps {
        Some(reps) => inference::omnibus_test_mc(&pattern.inner, &rhos, reps, seed),
        None => inference::omnibus_test(&pattern.inner, &rhos),
    }
    .map_err(to_py_err)?;
    report_to_dict(py, &report)
}

/// Exact null mean of the statistic.
#[pyfunction]
fn null_mean(rho: f64, dim: usize) -> f64 {
    cfspat::null_moments::null_mean(rho, dim)
}

/// Exact null variance of the statistic.
#[pyfunction]
fn null_variance(rho: f64, dim: usize, n: usize) -> PyResult<f64> {
    cfspat::null_moments::null_variance(rho, dim, n).map_err(to_py_err)
}

/// Adjusted null quantile under the method the resolution selects.
#[pyfunction]
fn null_quantile(rho: f64, n: usize, dim: usize, p: f64) -> PyResult<f64> {
    let null = inference::CfNull::new(rho, n, dim).map_err(to_py_err)?;
    null.quantile(p).map_err(to_py_err)
}

#[pyfunction]
fn sim_csr(n: usize, dim: usize, seed: u64) -> PyPointPattern {
    PyPointPattern { inner: cfspat::simulate::sim_csr(n, dim, seed) }
}

#[pyfunction]
fn sim_matern(n: usize, mu: f64, kappa: f64, r: f64, seed: u64) -> PyResult<PyPointPattern> {
    Ok(PyPointPattern {
        inner: cfspat::simulate::sim_matern(n, mu, kappa, r, seed).map_err(to_py_err)?,
    })
}

#[pyfunction]
fn sim_ssi(n: usize, delta: f64, seed: u64) -> PyResult<PyPointPattern> {
    Ok(PyPointPattern { inner: cfspat::simulate::sim_ssi(n, delta, seed).map_err(to_py_err)? })
}

#[pyfunction]
fn sim_inhom(n: usize, theta1: f64, theta2: f64, seed: u64) -> PyResult<PyPointPattern> {
    Ok(PyPointPattern {
        inner: cfspat::simulate::sim_inhom(n, theta1, theta2, seed).map_err(to_py_err)?,
    })
}

/// L-test statistic (isotropic-corrected K, sup over the default range).
#[pyfunction]
fn l_test(pattern: &PyPointPattern) -> PyResult<f64> {
    Ok(cfspat::competing::l_test(&pattern.inner, None, 512)
        .map_err(to_py_err)?
        .statistic)
}

/// Clark-Evans z statistic with the Donnelly edge adjustment.
#[pyfunction]
fn clark_evans(pattern: &PyPointPattern) -> PyResult<f64> {
    Ok(cfspat::competing::clark_evans(&pattern.inner)
        .map_err(to_py_err)?
        .statistic)
}

/// Statistic and null bands over a resolution grid.
#[pyfunction]
#[pyo3(signature = (pattern, grid_points = 64))]
fn envelope<'py>(
    py: Python<'py>,
    pattern: &PyPointPattern,
    grid_points: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = inference::default_rho_grid(pattern.inner.len(), grid_points.max(2));
    let curve = inference::envelope(&pattern.inner, &grid).map_err(to_py_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("rho", curve.rho_grid)?;
    d.set_item("delta", curve.delta)?;
    d.set_item("null_mean", curve.null_mean)?;
    d.set_item("lo95", curve.band_95.iter().map(|b| b.0).collect::<Vec<_>>())?;
    d.set_item("hi95", curve.band_95.iter().map(|b| b.1).collect::<Vec<_>>())?;
    d.set_item("lo99", curve.band_99.iter().map(|b| b.0).collect::<Vec<_>>())?;
    d.set_item("hi99", curve.band_99.iter().map(|b| b.1).collect::<Vec<_>>())?;
    Ok(d)
}

#[pymodule]
fn cfspat_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPointPattern>()?;
    m.add_function(wrap_pyfunction!(cf_statistic, m)?)?;
    m.add_function(wrap_pyfunction!(omega_bar_squared, m)?)?;
    m.add_function(wrap_pyfunction!(cf_test, m)?)?;
    m.add_function(wrap_pyfunction!(cf_test_mc, m)?)?;
    m.add_function(wrap_pyfunction!(omnibus_test, m)?)?;
    m.add_function(wrap_pyfunction!(null_mean, m)?)?;
    m.add_function(wrap_pyfunction!(null_variance, m)?)?;
    m.add_function(wrap_pyfunction!(null_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(sim_csr, m)?)?;
    m.add_function(wrap_pyfunction!(sim_matern, m)?)?;
    m.add_function(wrap_pyfunction!(sim_ssi, m)?)?;
    m.add_function(wrap_pyfunction!(sim_inhom, m)?)?;
    m.add_function(wrap_pyfunction!(l_test, m)?)?;
    m.add_function(wrap_pyfunction!(clark_evans, m)?)?;
    m.add_function(wrap_pyfunction!(envelope, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
