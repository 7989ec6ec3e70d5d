//! Python bindings for the `panelcsd` crate.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use panelcsd::battery::run_battery;
use panelcsd::simulation::{self, Alternative, McConfig};
use panelcsd::{build_residuals, Error, Method};

fn to_py(e: Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!(
            "{what}: rows have different lengths"
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Balanced panel: `y` is N × T, `x` holds one T × p matrix per unit.
#[pyclass(name = "PanelDataset", module = "pypanelcsd")]
struct PyPanel {
    inner: panelcsd::PanelDataset,
}

#[pymethods]
impl PyPanel {
    #[new]
    fn new(y: Vec<Vec<f64>>, x: Vec<Vec<Vec<f64>>>) -> PyResult<Self> {
        let y = matrix(&y, "y")?;
        let x = x
            .iter()
            .map(|m| matrix(m, "x"))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(PyPanel {
            inner: panelcsd::PanelDataset::new(y, x).map_err(to_py)?,
        })
    }

    /// Reads a long-format CSV with header `unit,time,y,x1,...`.
    #[staticmethod]
    #[pyo3(signature = (path, intercept = true))]
    fn from_csv(path: &str, intercept: bool) -> PyResult<Self> {
        let inner = panelcsd::cli_io::load_panel_csv(path.as_ref(), intercept).map_err(to_py)?;
        Ok(PyPanel { inner })
    }

    #[pyo3(signature = (path, skip_intercept = true))]
    fn to_csv(&self, path: &str, skip_intercept: bool) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| to_py(e.into()))?;
        panelcsd::cli_io::write_panel_csv(&self.inner, skip_intercept, file).map_err(to_py)
    }

    #[getter]
    fn n_units(&self) -> usize {
        self.inner.n_units()
    }

    #[getter]
    fn n_periods(&self) -> usize {
        self.inner.n_periods()
    }

    #[getter]
    fn n_regressors(&self) -> usize {
        self.inner.n_regressors()
    }

    fn y(&self) -> Vec<Vec<f64>> {
        self.inner
            .y()
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "PanelDataset(N={}, T={}, p={})",
            self.inner.n_units(),
            self.inner.n_periods(),
            self.inner.n_regressors()
        )
    }
}

#[pyclass(name = "TestOutcome", module = "pypanelcsd", get_all)]
struct PyOutcome {
    method: String,
    statistic: f64,
    p_value: f64,
    reject: bool,
    alpha: f64,
    aux: BTreeMap<String, f64>,
}

#[pymethods]
impl PyOutcome {
    fn __repr__(&self) -> String {
        format!(
            "TestOutcome(method={:?}, statistic={}, p_value={}, reject={})",
            self.method,
            self.statistic,
            self.p_value,
            if self.reject { "True" } else { "False" }
        )
    }
}

impl From<panelcsd::TestOutcome> for PyOutcome {
    fn from(o: panelcsd::TestOutcome) -> Self {
        PyOutcome {
            method: o.method.name().to_owned(),
            statistic: o.statistic,
            p_value: o.p_value,
            reject: o.reject,
            alpha: o.alpha,
            aux: o.aux,
        }
    }
}

/// Runs the named methods (`S_N`, `L_N`, `T_C`, `LM_BP`, `LM_PUY`,
/// `LM_FJLX`, `CD_P`); all three headline tests by default.
#[pyfunction]
#[pyo3(signature = (data, alpha = 0.05, nu = panelcsd::DEFAULT_NU, methods = None))]
fn run_tests(
    py: Python<'_>,
    data: &PyPanel,
    alpha: f64,
    nu: f64,
    methods: Option<Vec<String>>,
) -> PyResult<Vec<PyOutcome>> {
    let methods: Vec<Method> = match methods {
        None => vec![Method::SN, Method::LN, Method::TC],
        Some(names) => names
            .iter()
            .map(|m| m.parse::<Method>().map_err(to_py))
            .collect::<PyResult<_>>()?,
    };
    let panel = &data.inner;
    let outcomes = py.detach(|| -> panelcsd::Result<Vec<panelcsd::TestOutcome>> {
        let resids = build_residuals(panel)?;
        run_battery(&resids, alpha, nu, &methods)
            .into_iter()
            .map(|(_, o)| o)
            .collect()
    });
    Ok(outcomes
        .map_err(to_py)?
        .into_iter()
        .map(PyOutcome::from)
        .collect())
}

/// `−2 log p_L − 2 log p_S`.
#[pyfunction]
fn fisher_combine(p_l: f64, p_s: f64) -> PyResult<f64> {
    panelcsd::fisher_combine(p_l, p_s).map_err(to_py)
}

#[allow(clippy::too_many_arguments)]
fn mc_config(
    n: usize,
    t: usize,
    p: usize,
    process: &str,
    dist: &str,
    alt: &str,
    psi_scale: &str,
    seed: u64,
) -> PyResult<McConfig> {
    Ok(McConfig {
        error_process: process.parse().map_err(to_py)?,
        innovation: dist.parse().map_err(to_py)?,
        alternative: alt.parse::<Alternative>().map_err(to_py)?,
        psi_scale: psi_scale.parse().map_err(to_py)?,
        seed,
        ..McConfig::new(n, t, p)
    })
}

/// Draws replication `rep` of the simulation design.
#[pyfunction]
#[pyo3(signature = (n, t, p = 3, process = "ar1", dist = "normal", alt = "none", psi_scale = "text", seed = 1, rep = 0))]
#[allow(clippy::too_many_arguments)]
fn simulate_panel(
    n: usize,
    t: usize,
    p: usize,
    process: &str,
    dist: &str,
    alt: &str,
    psi_scale: &str,
    seed: u64,
    rep: u64,
) -> PyResult<PyPanel> {
    let cfg = mc_config(n, t, p, process, dist, alt, psi_scale, seed)?;
    let sim = simulation::simulate_panel(&cfg, rep).map_err(to_py)?;
    Ok(PyPanel { inner: sim.data })
}

/// Monte Carlo rejection rates, returned as a dict with `rates`,
/// `std_errors`, `failures` and `reps_completed`.
#[pyfunction]
#[pyo3(signature = (n, t, p = 3, process = "ar1", dist = "normal", alt = "none", psi_scale = "text",
                    reps = 1000, alpha = 0.05, nu = panelcsd::DEFAULT_NU, seed = 1, comparators = false))]
#[allow(clippy::too_many_arguments)]
fn monte_carlo<'py>(
    py: Python<'py>,
    n: usize,
    t: usize,
    p: usize,
    process: &str,
    dist: &str,
    alt: &str,
    psi_scale: &str,
    reps: usize,
    alpha: f64,
    nu: f64,
    seed: u64,
    comparators: bool,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let cfg = McConfig {
        reps,
        alpha,
        nu,
        extra_comparators: comparators,
        ..mc_config(n, t, p, process, dist, alt, psi_scale, seed)?
    };
    let report = py
        .detach(|| simulation::run_monte_carlo(&cfg))
        .map_err(to_py)?;
    let mut rates = BTreeMap::new();
    let mut errors = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for s in &report.methods {
        rates.insert(s.method.name(), s.rejection_rate);
        errors.insert(s.method.name(), s.mc_std_error);
        failures.insert(s.method.name(), s.failures);
    }
    let out = pyo3::types::PyDict::new(py);
    out.set_item("rates", rates)?;
    out.set_item("std_errors", errors)?;
    out.set_item("failures", failures)?;
    out.set_item("reps_completed", report.reps_completed)?;
    Ok(out)
}

#[pymodule]
fn pypanelcsd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPanel>()?;
    m.add_class::<PyOutcome>()?;
    m.add_function(wrap_pyfunction!(run_tests, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_combine, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_panel, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    Ok(())
}
