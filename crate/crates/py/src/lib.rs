//! Python bindings. Point sets cross the boundary as lists of rows, one row
//! per point, and parameters as lists of 1-3 coordinates.

use lspia::oracle::{densify, pinv_solution as dense_pinv_solution, spectral_report as dense_report, SpectralOptions};
use lspia::synth::{synthesize as synth, SyntheticKind, SyntheticSpec};
use lspia::{
    assemble, evaluate_form, Alpha, DataSet, EmptyGroupPolicy, FitProblem, InitialControls, ParamPoint, PointMatrix,
    SolverConfig, Termination, Variant,
};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(
    lspia_py,
    AssemblyError,
    PyValueError,
    "Raised when strict assembly finds uncovered basis functions."
);

fn py_err(e: lspia::Error) -> PyErr {
    match e {
        lspia::Error::SingularAssembly { .. } => AssemblyError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn points(rows: &[Vec<f64>]) -> PyResult<PointMatrix> {
    PointMatrix::from_rows(rows).map_err(py_err)
}

fn params(rows: &[Vec<f64>]) -> PyResult<Vec<ParamPoint>> {
    rows.iter().map(|t| ParamPoint::new(t).map_err(py_err)).collect()
}

type Rows = Vec<Vec<f64>>;

fn rows(p: &PointMatrix) -> Rows {
    p.iter_rows().map(<[f64]>::to_vec).collect()
}

fn by_name<T: Copy>(what: &str, s: &str, names: &[(&str, T)]) -> PyResult<T> {
    names
        .iter()
        .find(|(n, _)| *n == s)
        .map(|(_, v)| *v)
        .ok_or_else(|| PyValueError::new_err(format!("unknown {what} `{s}`")))
}

fn policy(s: &str) -> PyResult<EmptyGroupPolicy> {
    match s {
        "freeze" => Ok(EmptyGroupPolicy::Freeze),
        "strict" => Ok(EmptyGroupPolicy::Strict),
        other => Err(PyValueError::new_err(format!("empty_group must be `freeze` or `strict`, got `{other}`"))),
    }
}

/// Tensor-product B-spline space with clamped uniform knots on `[0, 1]`.
#[pyclass(name = "BasisSpace", module = "lspia_py", frozen)]
pub struct PyBasisSpace(lspia::BasisSpace);

#[pymethods]
impl PyBasisSpace {
    #[new]
    fn new(degrees: Vec<usize>, counts: Vec<usize>) -> PyResult<Self> {
        lspia::BasisSpace::clamped_uniform(&degrees, &counts).map(Self).map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn counts(&self) -> Vec<usize> {
        self.0.counts()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        let degrees: Vec<usize> = self.0.directions().iter().map(|k| k.degree()).collect();
        format!("BasisSpace(degrees={degrees:?}, counts={:?})", self.0.counts())
    }

    /// `Σ_i P_i B_i(t)` for control rows `controls`.
    fn evaluate(&self, controls: Vec<Vec<f64>>, t: Vec<f64>) -> PyResult<Vec<f64>> {
        let c = points(&controls)?;
        let t = ParamPoint::new(&t).map_err(py_err)?;
        evaluate_form(&self.0, &c, &t).map_err(py_err)
    }

    /// Value of the basis function with flat index `i` at `t`.
    fn basis(&self, i: usize, t: Vec<f64>) -> PyResult<f64> {
        let t = ParamPoint::new(&t).map_err(py_err)?;
        lspia::unified_basis_eval(&self.0, i, &t).map_err(py_err)
    }

    /// Flat index to per-direction indices.
    fn unflatten(&self, i: usize) -> PyResult<Vec<usize>> {
        self.0.unflatten_index(i).map_err(py_err)
    }
}

fn problem(space: &PyBasisSpace, pts: &[Vec<f64>], prm: &[Vec<f64>], empty_group: &str) -> PyResult<FitProblem> {
    let data = DataSet::new(points(pts)?, params(prm)?).map_err(py_err)?;
    assemble(&space.0, &data, policy(empty_group)?).map_err(py_err)
}

/// Outcome of [`fit`].
#[pyclass(name = "FitResult", module = "lspia_py", frozen, get_all)]
pub struct PyFitResult {
    controls: Vec<Vec<f64>>,
    termination: String,
    iterations_used: usize,
    residuals: Vec<f64>,
    deltas: Vec<f64>,
    alpha: Option<f64>,
    frozen: Vec<usize>,
}

#[pymethods]
impl PyFitResult {
    fn __repr__(&self) -> String {
        format!(
            "FitResult(termination={:?}, iterations_used={}, residual={:e})",
            self.termination,
            self.iterations_used,
            self.residuals.last().copied().unwrap_or(f64::NAN)
        )
    }
}

/// Fits control points of `space` to `points` sampled at `params`.
///
/// `alpha=None` picks the uniform step size automatically.
#[pyfunction]
#[pyo3(signature = (space, points, params, *, variant="weighted", alpha=None, tol_delta=1e-10, max_iters=100_000,
                    empty_group="freeze", init="zero"))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    space: &PyBasisSpace,
    points: Vec<Vec<f64>>,
    params: Vec<Vec<f64>>,
    variant: &str,
    alpha: Option<f64>,
    tol_delta: f64,
    max_iters: usize,
    empty_group: &str,
    init: &str,
) -> PyResult<PyFitResult> {
    let p = problem(space, &points, &params, empty_group)?;
    let cfg = SolverConfig {
        variant: by_name("variant", variant, &[("weighted", Variant::Weighted), ("uniform", Variant::Uniform)])?,
        alpha: alpha.map_or(Alpha::Auto, Alpha::Fixed),
        tol_delta,
        max_iters,
        empty_group_policy: policy(empty_group)?,
        ..Default::default()
    };
    let init = match init {
        "zero" => InitialControls::Zero,
        "subset" => InitialControls::Subset,
        other => return Err(PyValueError::new_err(format!("init must be `zero` or `subset`, got `{other}`"))),
    };
    let r = py.detach(|| lspia::fit(&p, &init, &cfg)).map_err(py_err)?;
    Ok(PyFitResult {
        controls: rows(&r.controls),
        termination: match r.termination {
            Termination::Converged => "converged",
            Termination::MaxIters => "max_iters",
            Termination::Stagnated => "stagnated",
        }
        .to_string(),
        iterations_used: r.iterations_used,
        residuals: r.trace.iter().map(|t| t.residual_norm).collect(),
        deltas: r.trace.iter().map(|t| t.delta_norm).collect(),
        alpha: r.alpha,
        frozen: p.weights().frozen_indices(),
    })
}

/// Eigen, rank and pseudo-inverse diagnostics of the system assembled from
/// `params`, as a dict.
#[pyfunction]
#[pyo3(signature = (space, params, *, empty_group="freeze"))]
fn spectral_report<'py>(
    py: Python<'py>,
    space: &PyBasisSpace,
    params: Vec<Vec<f64>>,
    empty_group: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let zeros = vec![vec![0.0]; params.len()];
    let p = problem(space, &zeros, &params, empty_group)?;
    let r = dense_report(p.collocation(), p.weights(), &SpectralOptions::default()).map_err(py_err)?;
    let flags = PyDict::new(py);
    flags.set_item("real_01", r.flags.real_01)?;
    flags.set_item("zero_count", r.flags.zero_count)?;
    flags.set_item("rank_match", r.flags.rank_match)?;
    let d = PyDict::new(py);
    d.set_item("rank", r.rank)?;
    d.set_item("n0", r.n0)?;
    d.set_item("eig_min", r.eig_min)?;
    d.set_item("eig_max", r.eig_max)?;
    d.set_item("max_imag", r.max_imag)?;
    d.set_item("flags", flags)?;
    d.set_item("penrose_residuals", r.penrose_residuals.to_vec())?;
    d.set_item("eigenvalues", r.eigenvalues)?;
    Ok(d)
}

/// Minimum-norm least-squares control points `(AᵀA)⁺AᵀQ`.
#[pyfunction]
fn pinv_solution(space: &PyBasisSpace, points: Vec<Vec<f64>>, params: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let p = problem(space, &points, &params, "freeze")?;
    let zero = PointMatrix::zeros(p.controls(), p.dim());
    dense_pinv_solution(&densify(p.collocation()), p.data(), &zero).map(|s| rows(&s)).map_err(py_err)
}

/// Deterministic synthetic samples; returns `(points, params)`.
#[pyfunction]
#[pyo3(signature = (kind, *, samples=50, param_dim=1, clusters=8, hole_lo=None, hole_hi=None, random_params=false,
                    noise=0.0, seed=0))]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    kind: &str,
    samples: usize,
    param_dim: usize,
    clusters: usize,
    hole_lo: Option<Vec<f64>>,
    hole_hi: Option<Vec<f64>>,
    random_params: bool,
    noise: f64,
    seed: u64,
) -> PyResult<(Rows, Rows)> {
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec {
        kind: kind.parse::<SyntheticKind>().map_err(py_err)?,
        samples,
        param_dim,
        clusters,
        hole_lo: hole_lo.unwrap_or(d.hole_lo),
        hole_hi: hole_hi.unwrap_or(d.hole_hi),
        random_params,
        noise,
        seed,
    };
    let data = synth(&spec).map_err(py_err)?;
    Ok((rows(data.points()), data.params().iter().map(|t| t.coords().to_vec()).collect()))
}

#[pymodule]
fn lspia_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBasisSpace>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_report, m)?)?;
    m.add_function(wrap_pyfunction!(pinv_solution, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add("AssemblyError", m.py().get_type::<AssemblyError>())?;
    Ok(())
}
