//! Python bindings: `import preview_regret`.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use preview_regret::invariance::{self, InvariantOptions};
use preview_regret::io::{parse_system, Versioned};
use preview_regret::models::{self, TemplateName, TemplateParams};
use preview_regret::mpc::{self, MpcConfig};
use preview_regret::polytope::{self, HPolytope};
use preview_regret::regret::{self, RegretCertificate, RegretInputs};
use preview_regret::systems::{collaborative, Dynamics, LinearSystem};
use preview_regret::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_)
        | Error::DimensionMismatch(_)
        | Error::NormalForm { .. }
        | Error::NotInvariant { .. }
        | Error::EmptySet => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Polytope `{x : H x <= h}`.
#[pyclass(name = "Polytope", module = "preview_regret", from_py_object)]
#[derive(Clone)]
struct PyPolytope {
    inner: HPolytope,
}

#[pymethods]
impl PyPolytope {
    #[new]
    fn new(h_mat: Vec<Vec<f64>>, h_vec: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: HPolytope::from_rows(&h_mat, &h_vec).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(name = "box")]
    fn from_box(lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Self> {
        if lower.len() != upper.len() {
            return Err(PyValueError::new_err("bounds differ in length"));
        }
        Ok(Self { inner: HPolytope::from_box(&lower, &upper) })
    }

    #[staticmethod]
    fn interval(lo: f64, hi: f64) -> Self {
        Self { inner: HPolytope::interval(lo, hi) }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let v: Versioned<HPolytope> = serde_json::from_str(text).map_err(json_err)?;
        Ok(Self { inner: v.body })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&Versioned::new(&self.inner)).map_err(json_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    #[allow(non_snake_case)]
    fn H(&self) -> Vec<Vec<f64>> {
        rows(self.inner.h_mat())
    }

    #[getter]
    fn h(&self) -> Vec<f64> {
        self.inner.h_vec().iter().copied().collect()
    }

    fn num_rows(&self) -> usize {
        self.inner.num_rows()
    }

    #[pyo3(signature = (x, tol = 1e-9))]
    fn contains_point(&self, x: Vec<f64>, tol: f64) -> PyResult<bool> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err("point has the wrong dimension"));
        }
        Ok(self.inner.contains_point(&DVector::from_vec(x), tol))
    }

    #[pyo3(signature = (other, tol = 1e-6))]
    fn contains(&self, other: &PyPolytope, tol: f64) -> PyResult<bool> {
        self.inner.contains(&other.inner, tol).map_err(err)
    }

    #[pyo3(signature = (other, tol = 1e-6))]
    fn set_equal(&self, other: &PyPolytope, tol: f64) -> PyResult<bool> {
        self.inner.set_equal(&other.inner, tol).map_err(err)
    }

    fn is_empty(&self) -> PyResult<bool> {
        self.inner.is_empty().map_err(err)
    }

    fn scale(&self, factor: f64) -> PyResult<Self> {
        Ok(Self { inner: self.inner.scale(factor).map_err(err)? })
    }

    fn intersect(&self, other: &PyPolytope) -> PyResult<Self> {
        Ok(Self { inner: self.inner.intersect(&other.inner).map_err(err)? })
    }

    fn cartesian_product(&self, other: &PyPolytope) -> Self {
        Self { inner: self.inner.cartesian_product(&other.inner) }
    }

    /// Projection onto the first `k` coordinates.
    fn project(&self, k: usize) -> PyResult<Self> {
        Ok(Self { inner: self.inner.project_auto(k).map_err(err)? })
    }

    fn remove_redundancy(&self) -> PyResult<Self> {
        Ok(Self { inner: self.inner.remove_redundancy().map_err(err)? })
    }

    fn support(&self, direction: Vec<f64>) -> PyResult<f64> {
        self.inner.support(&DVector::from_vec(direction)).map_err(err)
    }

    fn vertices(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.vertices().map_err(err)?.into_iter().map(|v| v.iter().copied().collect()).collect())
    }

    /// `(lower, upper)` corners of the bounding box.
    fn bounding_box(&self) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let b = self.inner.bounding_box().map_err(err)?;
        Ok((b.lower, b.upper))
    }

    fn __repr__(&self) -> String {
        format!("Polytope(dim={}, rows={})", self.inner.dim(), self.inner.num_rows())
    }
}

/// `x⁺ = A x + B u + E d` with `d ∈ D` and `(x, u) ∈ S_xu`.
#[pyclass(name = "System", module = "preview_regret", from_py_object)]
#[derive(Clone)]
struct PySystem {
    inner: LinearSystem,
}

#[pymethods]
impl PySystem {
    #[new]
    #[allow(non_snake_case)]
    fn new(A: Vec<Vec<f64>>, B: Vec<Vec<f64>>, E: Vec<Vec<f64>>, D: &PyPolytope, S_xu: &PyPolytope) -> PyResult<Self> {
        let m = |r: &[Vec<f64>]| {
            let nr = r.len();
            let nc = r.first().map_or(0, |x| x.len());
            if r.iter().any(|x| x.len() != nc) {
                return Err(PyValueError::new_err("ragged matrix"));
            }
            Ok(DMatrix::from_fn(nr, nc, |i, j| r[i][j]))
        };
        let sys = LinearSystem::new(m(&A)?, m(&B)?, m(&E)?, D.inner.clone(), S_xu.inner.clone()).map_err(err)?;
        Ok(Self { inner: sys })
    }

    /// Parses a versioned system file; `seed` overrides a random example's seed.
    #[staticmethod]
    #[pyo3(signature = (text, seed = None))]
    fn from_json(text: &str, seed: Option<u64>) -> PyResult<Self> {
        Ok(Self { inner: parse_system(text, seed).map_err(err)?.system })
    }

    #[staticmethod]
    fn scalar(a: f64, x_bar: f64, u_bar: f64, d_bar: f64) -> PyResult<Self> {
        Ok(Self { inner: models::build_1d(a, x_bar, u_bar, d_bar).map_err(err)?.0 })
    }

    #[staticmethod]
    fn random_2d(seed: u64) -> Self {
        Self { inner: models::build_2d_random(seed) }
    }

    /// `name` is one of `lane_keeping`, `biped`, `wind_turbine`; `params` is
    /// an optional JSON object of template parameters.
    #[staticmethod]
    #[pyo3(signature = (name, params = None))]
    fn template(name: &str, params: Option<&str>) -> PyResult<Self> {
        let name: TemplateName = name.parse().map_err(err)?;
        let params: TemplateParams = match params {
            Some(t) => serde_json::from_str(t).map_err(json_err)?,
            None => TemplateParams::default(),
        };
        Ok(Self { inner: models::build_template(name, &params).map_err(err)?.system })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&Versioned::new(&self.inner)).map_err(json_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn l(&self) -> usize {
        self.inner.l()
    }

    #[getter]
    #[allow(non_snake_case)]
    fn A(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.a)
    }

    #[getter]
    #[allow(non_snake_case)]
    fn B(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.b)
    }

    #[getter]
    #[allow(non_snake_case)]
    fn E(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.e)
    }

    #[getter]
    #[allow(non_snake_case)]
    fn D(&self) -> PyPolytope {
        PyPolytope { inner: self.inner.d.clone() }
    }

    #[getter]
    #[allow(non_snake_case)]
    fn S_xu(&self) -> PyPolytope {
        PyPolytope { inner: self.inner.s_xu.clone() }
    }

    fn __repr__(&self) -> String {
        format!("System(n={}, m={}, l={})", self.inner.n(), self.inner.m(), self.inner.l())
    }
}

/// Certified bound on the safety regret as a function of the preview.
#[pyclass(name = "Certificate", module = "preview_regret", from_py_object)]
#[derive(Clone)]
struct PyCertificate {
    inner: RegretCertificate,
}

#[pymethods]
impl PyCertificate {
    #[getter]
    fn method(&self) -> PyResult<String> {
        Ok(serde_json::to_value(self.inner.method).map_err(json_err)?.as_str().unwrap_or_default().to_string())
    }
    #[getter]
    fn lambda0(&self) -> f64 {
        self.inner.lambda0
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }
    #[getter]
    #[pyo3(name = "lambda_")]
    fn lambda(&self) -> f64 {
        self.inner.lambda
    }
    #[getter]
    #[allow(non_snake_case)]
    fn N(&self) -> usize {
        self.inner.n_steps
    }
    #[getter]
    fn k0(&self) -> Option<usize> {
        self.inner.k0
    }
    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }
    #[getter]
    fn c(&self) -> f64 {
        self.inner.c
    }
    #[getter]
    fn r_co(&self) -> f64 {
        self.inner.r_co
    }
    #[getter]
    fn p0(&self) -> usize {
        self.inner.p0
    }
    #[getter]
    fn certified(&self) -> bool {
        self.inner.certified
    }

    fn bound_dp(&self, p: usize) -> PyResult<f64> {
        self.inner.bound_dp(p).map_err(err)
    }

    fn bound_marginal(&self, p: usize) -> PyResult<f64> {
        self.inner.bound_marginal(p).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&Versioned::new(&self.inner)).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Certificate(method={:?}, lambda0={:.6}, gamma={:.6}, N={})",
            self.inner.method, self.inner.lambda0, self.inner.gamma, self.inner.n_steps
        )
    }
}

/// Ladder of backward reachable sets and its stopping index.
#[pyclass(name = "ConvergenceReport", module = "preview_regret", get_all, skip_from_py_object)]
struct PyConvergence {
    p_bar: Option<usize>,
    p0: usize,
    distances: Vec<f64>,
    ladder: Vec<PyPolytope>,
}

#[pyclass(name = "MpcStep", module = "preview_regret", get_all, skip_from_py_object)]
struct PyMpcStep {
    feasible: bool,
    u0: Vec<f64>,
    states: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
    cost: f64,
}

#[pyclass(name = "Trajectory", module = "preview_regret", get_all, skip_from_py_object)]
struct PyTrajectory {
    x: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
    feasible: Vec<bool>,
    cost: Vec<f64>,
}

fn opts(max_iter: usize, tol: f64) -> InvariantOptions {
    InvariantOptions { max_iter, tol, ..InvariantOptions::default() }
}

fn vecs(v: Vec<Vec<f64>>) -> Vec<DVector<f64>> {
    v.into_iter().map(DVector::from_vec).collect()
}

/// Maximal robust controlled invariant set; returns `(set, converged, iterations)`.
#[pyfunction]
#[pyo3(signature = (sys, preview = 0, collaborative = false, max_iter = 500, tol = 1e-10))]
fn max_rcis(
    py: Python<'_>,
    sys: &PySystem,
    preview: usize,
    collaborative: bool,
    max_iter: usize,
    tol: f64,
) -> PyResult<(PyPolytope, bool, usize)> {
    let sys = sys.inner.clone();
    let o = opts(max_iter, tol);
    let r = py
        .detach(move || -> preview_regret::Result<invariance::InvariantResult> {
            let co = preview_regret::systems::collaborative(&sys);
            if collaborative {
                let base = invariance::max_invariant_set(&co, &co.s, &o)?;
                let set = invariance::cmax_p_co(&sys, preview, &base.set)?;
                Ok(invariance::InvariantResult { set, ..base })
            } else if preview == 0 {
                invariance::max_invariant_set(&sys, &sys.s_xu, &o)
            } else {
                let base = invariance::max_invariant_set(&co, &co.s, &o)?;
                invariance::max_rcis_preview(&sys, preview, base.converged.then_some(&base.set), &o)
            }
        })
        .map_err(err)?;
    Ok((PyPolytope { inner: r.set }, r.converged, r.iterations))
}

/// Maximal controlled invariant set of the disturbance-collaborative system.
#[pyfunction]
fn cmax_co(py: Python<'_>, sys: &PySystem) -> PyResult<PyPolytope> {
    let sys = sys.inner.clone();
    let set = py
        .detach(move || {
            let co = collaborative(&sys);
            invariance::max_invariant_set(&co, &co.s, &InvariantOptions::default())
        })
        .map_err(err)?
        .set;
    Ok(PyPolytope { inner: set })
}

/// One-step backward reachable set of `x` within the safe set; with
/// `collaborative` the disturbance acts as a second input.
#[pyfunction]
#[pyo3(signature = (sys, x, steps = 1, collaborative = false))]
fn pre(sys: &PySystem, x: &PyPolytope, steps: usize, collaborative: bool) -> PyResult<PyPolytope> {
    let s = &sys.inner;
    let set = if collaborative {
        let co = preview_regret::systems::collaborative(s);
        invariance::pre_k(&co, &x.inner, &co.s, steps)
    } else {
        invariance::pre_k(s, &x.inner, &s.s_xu, steps)
    }
    .map_err(err)?;
    Ok(PyPolytope { inner: set })
}

#[pyfunction]
fn hausdorff(inner: &PyPolytope, outer: &PyPolytope) -> PyResult<f64> {
    polytope::hausdorff_nested(&inner.inner, &outer.inner).map_err(err)
}

#[pyfunction]
fn containment_ratio(p1: &PyPolytope, p2: &PyPolytope) -> PyResult<f64> {
    polytope::containment_ratio(&p1.inner, &p2.inner).map_err(err)
}

/// Certificates for preview `p0`: `alg` is `"1"`, `"1r"` or `"2"`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (sys, c_max_co, c_max_p0, p0, alg = "2", n_steps = None, projection = None))]
fn certificate(
    py: Python<'_>,
    sys: &PySystem,
    c_max_co: &PyPolytope,
    c_max_p0: &PyPolytope,
    p0: usize,
    alg: &str,
    n_steps: Option<usize>,
    projection: Option<&PyPolytope>,
) -> PyResult<PyCertificate> {
    let (sys, cco, cp, proj) = (sys.inner.clone(), c_max_co.inner.clone(), c_max_p0.inner.clone(), projection.map(|p| p.inner.clone()));
    let alg = alg.to_string();
    let cert = py
        .detach(move || {
            let inp = RegretInputs { sys: &sys, c_max_co: &cco, c_max_p0: &cp, p0, projection: proj.as_ref() };
            match alg.as_str() {
                "1" => regret::algorithm1(&inp, false),
                "1r" => regret::algorithm1(&inp, true),
                "2" => regret::algorithm2(&inp, n_steps.unwrap_or(sys.n())),
                other => Err(Error::InvalidInput(format!("unknown algorithm {other:?}"))),
            }
        })
        .map_err(err)?;
    Ok(PyCertificate { inner: cert })
}

#[pyfunction]
#[pyo3(signature = (sys, c_max_co, proj_c_p0, p0, k_max = 50))]
fn convergence(sys: &PySystem, c_max_co: &PyPolytope, proj_c_p0: &PyPolytope, p0: usize, k_max: usize) -> PyResult<PyConvergence> {
    let r = regret::algorithm3(&sys.inner, &c_max_co.inner, &proj_c_p0.inner, p0, k_max, regret::DEFAULT_LADDER_TAU)
        .map_err(err)?;
    Ok(PyConvergence {
        p_bar: r.p_bar,
        p0: r.p0,
        distances: r.distances,
        ladder: r.ladder.into_iter().map(|inner| PyPolytope { inner }).collect(),
    })
}

/// Directly computed safety regret at preview `p`.
#[pyfunction]
#[pyo3(signature = (sys, p, c_max_co, budget = regret::TRUE_DP_BUDGET))]
fn true_dp(py: Python<'_>, sys: &PySystem, p: usize, c_max_co: &PyPolytope, budget: usize) -> PyResult<f64> {
    let (sys, cco) = (sys.inner.clone(), c_max_co.inner.clone());
    py.detach(move || regret::true_dp(&sys, p, &cco, budget)).map_err(err)
}

/// `(projection, full)`; `full` is `None` beyond the dimension budget.
#[pyfunction]
fn feasible_domain(sys: &PySystem, terminal: &PyPolytope, p: usize) -> PyResult<(PyPolytope, Option<PyPolytope>)> {
    let fd = mpc::feasible_domain(&sys.inner, &terminal.inner, p, true).map_err(err)?;
    Ok((PyPolytope { inner: fd.projection }, fd.full.map(|inner| PyPolytope { inner })))
}

#[pyfunction]
fn theorem9_certificate(sys: &PySystem, terminal: &PyPolytope, c_max_co: &PyPolytope) -> PyResult<PyCertificate> {
    Ok(PyCertificate { inner: mpc::theorem9_certificate(&sys.inner, &terminal.inner, &c_max_co.inner).map_err(err)? })
}

#[pyfunction]
fn mpc_step(sys: &PySystem, terminal: &PyPolytope, x0: Vec<f64>, preview: Vec<Vec<f64>>) -> PyResult<PyMpcStep> {
    let cfg = MpcConfig::new(&sys.inner, preview.len(), terminal.inner.clone());
    let s = mpc::mpc_step(&sys.inner, &cfg, &DVector::from_vec(x0), &vecs(preview)).map_err(err)?;
    Ok(PyMpcStep { feasible: s.feasible, u0: s.u0, states: s.states, inputs: s.inputs, cost: s.cost })
}

/// Closed loop with preview `p` over `disturbances` (at least `steps + p − 1`).
#[pyfunction]
fn simulate(
    sys: &PySystem,
    terminal: &PyPolytope,
    p: usize,
    x0: Vec<f64>,
    disturbances: Vec<Vec<f64>>,
    steps: usize,
) -> PyResult<PyTrajectory> {
    let cfg = MpcConfig::new(&sys.inner, p, terminal.inner.clone());
    let tr = mpc::simulate_closed_loop(&sys.inner, &cfg, &DVector::from_vec(x0), &vecs(disturbances), steps)
        .map_err(err)?;
    let mut out = PyTrajectory { x: Vec::new(), u: Vec::new(), d: Vec::new(), feasible: Vec::new(), cost: Vec::new() };
    for r in tr.rows {
        out.x.push(r.x);
        out.u.push(r.u);
        out.d.push(r.d);
        out.feasible.push(r.feasible);
        out.cost.push(r.cost);
    }
    Ok(out)
}

#[pyfunction]
fn sample_disturbances(sys: &PySystem, length: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    Ok(mpc::sample_disturbances(&sys.inner.d, length, seed)
        .map_err(err)?
        .into_iter()
        .map(|d| d.iter().copied().collect())
        .collect())
}

#[pymodule(name = "preview_regret")]
fn preview_regret_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolytope>()?;
    m.add_class::<PySystem>()?;
    m.add_class::<PyCertificate>()?;
    m.add_class::<PyConvergence>()?;
    m.add_class::<PyMpcStep>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(max_rcis, m)?)?;
    m.add_function(wrap_pyfunction!(cmax_co, m)?)?;
    m.add_function(wrap_pyfunction!(pre, m)?)?;
    m.add_function(wrap_pyfunction!(hausdorff, m)?)?;
    m.add_function(wrap_pyfunction!(containment_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(certificate, m)?)?;
    m.add_function(wrap_pyfunction!(convergence, m)?)?;
    m.add_function(wrap_pyfunction!(true_dp, m)?)?;
    m.add_function(wrap_pyfunction!(feasible_domain, m)?)?;
    m.add_function(wrap_pyfunction!(theorem9_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(mpc_step, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sample_disturbances, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
