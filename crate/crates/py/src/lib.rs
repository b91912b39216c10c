//! Python bindings: grids as nested lists, solvers returning result objects.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use tgv_core::fields::{Field, GridShape, ScalarField};
use tgv_core::solver::{self, Fidelity, Metric};
use tgv_core::{affine, harness, io, oned};

fn err(e: tgv_core::Error) -> PyErr {
    match e {
        tgv_core::Error::Io(_) | tgv_core::Error::Parse(_) | tgv_core::Error::Csv(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Scalar image or 1-D signal on a uniform grid.
#[pyclass(name = "ScalarField", module = "tgv_py", from_py_object)]
#[derive(Clone)]
pub struct PyScalarField {
    inner: ScalarField,
}

#[pymethods]
impl PyScalarField {
    /// Build from a list of rows (2-D) or a flat list (1-D).
    #[new]
    #[pyo3(signature = (data, spacing = 1.0))]
    fn new(data: &Bound<'_, PyAny>, spacing: f64) -> PyResult<Self> {
        let (shape, values) = if let Ok(rows) = data.extract::<Vec<Vec<f64>>>() {
            let cols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != cols) {
                return Err(PyValueError::new_err("ragged rows"));
            }
            (GridShape::plane(rows.len(), cols), rows.concat())
        } else {
            let v: Vec<f64> = data.extract()?;
            (GridShape::line(v.len()), v)
        };
        let shape = shape.and_then(|s| s.with_spacing(spacing)).map_err(err)?;
        Ok(Self { inner: ScalarField::new(shape, values).map_err(err)? })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        let s = self.inner.shape();
        (s.n1(), s.n2())
    }

    #[getter]
    fn dims(&self) -> usize {
        self.inner.shape().dims()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.shape().spacing()
    }

    /// Values as a list of rows (2-D) or a flat list (1-D).
    fn to_list(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let s = self.inner.shape();
        let v = self.inner.values();
        if s.dims() == 1 {
            Ok(v.to_vec().into_pyobject(py)?.into_any().unbind())
        } else {
            let rows: Vec<Vec<f64>> = v.chunks(s.n2()).map(<[f64]>::to_vec).collect();
            Ok(rows.into_pyobject(py)?.into_any().unbind())
        }
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    /// `||self - other|| / ||self||`.
    fn rel_l2_distance(&self, other: &PyScalarField) -> PyResult<f64> {
        self.inner.rel_l2_distance(&other.inner).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        io::save_scalar(path.as_ref(), &self.inner).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: io::load_scalar(path.as_ref()).map_err(err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.values().len()
    }

    fn __repr__(&self) -> String {
        let (n1, n2) = self.shape();
        format!("ScalarField(dims={}, shape=({n1}, {n2}), spacing={})", self.dims(), self.spacing())
    }
}

#[pyclass(name = "SolverConfig", module = "tgv_py", from_py_object)]
#[derive(Clone)]
pub struct PySolverConfig {
    inner: solver::SolverConfig,
}

#[pymethods]
impl PySolverConfig {
    /// `metric` is `"change"` or `"gap"`.
    #[new]
    #[pyo3(signature = (max_iter = 20_000, tol = 1e-8, p = 2, step_ratio = 1.0, adaptive = false, metric = "change"))]
    fn new(max_iter: usize, tol: f64, p: u32, step_ratio: f64, adaptive: bool, metric: &str) -> PyResult<Self> {
        let metric = match metric {
            "change" => Metric::RelativeIterateChange,
            "gap" => Metric::PrimalDualGap,
            other => return Err(PyValueError::new_err(format!("unknown metric {other:?}"))),
        };
        let inner = solver::SolverConfig::default()
            .with_max_iter(max_iter)
            .with_tol(tol)
            .with_fidelity(Fidelity::from_exponent(p).map_err(err)?)
            .with_step_ratio(step_ratio)
            .with_adaptive(adaptive)
            .with_metric(metric);
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!("SolverConfig({})", self.inner.canonical())
    }
}

fn config(cfg: Option<PySolverConfig>) -> solver::SolverConfig {
    cfg.map_or_else(solver::SolverConfig::default, |c| c.inner)
}

#[pyclass(name = "SolveResult", module = "tgv_py")]
pub struct PySolveResult {
    inner: solver::SolveResult,
}

#[pymethods]
impl PySolveResult {
    #[getter]
    fn u(&self) -> Option<PyScalarField> {
        self.inner.state.u.clone().map(|inner| PyScalarField { inner })
    }

    /// Channels of the vector field `w` as flat lists.
    #[getter]
    fn w(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.state.w.as_ref().map(|w| (0..w.channels()).map(|k| w.channel(k).to_vec()).collect())
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.inner.objective
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn final_metric(&self) -> f64 {
        self.inner.final_metric
    }

    /// `(iteration, energy, metric)` checkpoints.
    fn history(&self) -> Vec<(usize, f64, f64)> {
        self.inner.metric_history.iter().map(|c| (c.iteration, c.energy, c.metric)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveResult(objective={}, iterations={}, converged={})",
            self.inner.objective, self.inner.iterations, self.inner.converged
        )
    }
}

fn wrap(res: tgv_core::Result<solver::SolveResult>) -> PyResult<PySolveResult> {
    res.map(|inner| PySolveResult { inner }).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (f, alpha, config = None))]
fn solve_tv(f: &PyScalarField, alpha: f64, config: Option<PySolverConfig>) -> PyResult<PySolveResult> {
    wrap(solver::solve_tv(&f.inner, alpha, &self::config(config)))
}

#[pyfunction]
#[pyo3(signature = (f, alpha, beta, config = None))]
fn solve_tgv2(f: &PyScalarField, alpha: f64, beta: f64, config: Option<PySolverConfig>) -> PyResult<PySolveResult> {
    wrap(solver::solve_tgv2(&f.inner, alpha, beta, &self::config(config)))
}

#[pyfunction]
#[pyo3(signature = (f, beta, config = None))]
fn solve_tv2_1d(f: &PyScalarField, beta: f64, config: Option<PySolverConfig>) -> PyResult<PySolveResult> {
    wrap(solver::solve_tv2_1d(&f.inner, beta, &self::config(config)))
}

/// `TGV²(u)` with the given weights.
#[pyfunction]
#[pyo3(signature = (u, alpha, beta, config = None))]
fn eval_tgv(u: &PyScalarField, alpha: f64, beta: f64, config: Option<PySolverConfig>) -> PyResult<f64> {
    let cfg = config.map_or_else(solver::SolverConfig::eval_tgv_defaults, |c| c.inner);
    solver::eval_tgv(&u.inner, alpha, beta, &cfg).map(|(v, _)| v).map_err(err)
}

/// Least-squares affine fit: `(fitted field, [c0, c1, c2])` in centred
/// coordinates.
#[pyfunction]
fn linear_regression(f: &PyScalarField) -> PyResult<(PyScalarField, Vec<f64>)> {
    let fit = affine::linear_regression(&f.inner).map_err(err)?;
    let fitted = fit.evaluate(f.inner.shape());
    Ok((PyScalarField { inner: fitted }, vec![fit.c0, fit.c1, fit.c2]))
}

/// Kernel-of-E median of the gradient of `u`: `(skew, b1, b2, objective)`.
#[pyfunction]
#[pyo3(signature = (u, tol = 1e-12, max_iter = 10_000))]
fn median_ker_e_of_grad(u: &PyScalarField, tol: f64, max_iter: usize) -> PyResult<(f64, f64, f64, f64)> {
    let g = tgv_core::diffops::grad(&u.inner);
    let m = affine::median_ker_e(&g, tol, max_iter).map_err(err)?;
    Ok((m.element.skew, m.element.offset[0], m.element.offset[1], m.objective))
}

/// Largest β without a jump part for a 1-D signal; NaN if not bracketed.
#[pyfunction]
#[pyo3(signature = (f, alpha, config = None))]
fn find_beta_star(f: &PyScalarField, alpha: f64, config: Option<PySolverConfig>) -> PyResult<f64> {
    oned::find_beta_star(&f.inner, alpha, &self::config(config)).map(|b| b.beta_star).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (n, radius_frac = 0.25, offset = (0.0, 0.0)))]
fn gen_disk(n: usize, radius_frac: f64, offset: (f64, f64)) -> PyResult<PyScalarField> {
    let inner = harness::gen_disk(n, radius_frac, [offset.0, offset.1]).map_err(err)?;
    Ok(PyScalarField { inner })
}

#[pyfunction]
fn gen_squares(n: usize) -> PyResult<PyScalarField> {
    Ok(PyScalarField { inner: harness::gen_squares(n).map_err(err)? })
}

#[pyfunction]
fn gen_ramp_ellipse(n: usize) -> PyResult<PyScalarField> {
    Ok(PyScalarField { inner: harness::gen_ramp_ellipse(n).map_err(err)? })
}

#[pyfunction]
#[pyo3(signature = (f, sigma, seed = 42))]
fn add_noise(f: &PyScalarField, sigma: f64, seed: u64) -> PyResult<PyScalarField> {
    Ok(PyScalarField { inner: harness::add_noise(&f.inner, sigma, seed).map_err(err)? })
}

#[pymodule]
fn tgv_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScalarField>()?;
    m.add_class::<PySolverConfig>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(solve_tv, m)?)?;
    m.add_function(wrap_pyfunction!(solve_tgv2, m)?)?;
    m.add_function(wrap_pyfunction!(solve_tv2_1d, m)?)?;
    m.add_function(wrap_pyfunction!(eval_tgv, m)?)?;
    m.add_function(wrap_pyfunction!(linear_regression, m)?)?;
    m.add_function(wrap_pyfunction!(median_ker_e_of_grad, m)?)?;
    m.add_function(wrap_pyfunction!(find_beta_star, m)?)?;
    m.add_function(wrap_pyfunction!(gen_disk, m)?)?;
    m.add_function(wrap_pyfunction!(gen_squares, m)?)?;
    m.add_function(wrap_pyfunction!(gen_ramp_ellipse, m)?)?;
    m.add_function(wrap_pyfunction!(add_noise, m)?)?;
    Ok(())
}
