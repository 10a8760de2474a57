//! Backward reachability and maximal invariant sets.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::polytope::{HPolytope, TAU_SET};
use crate::systems::{augment, collaborative_augmented, Dynamics, LinearSystem};

/// One-step robust backward reachable set
/// `{x : ∃u, (x, u) ∈ S, Ax + Bu + Ed ∈ X ∀d ∈ D}`.
pub fn pre<S: Dynamics + ?Sized>(sys: &S, x: &HPolytope, s: &HPolytope) -> Result<HPolytope> {
    let (n, m) = (sys.n(), sys.m());
    if x.dim() != n || s.dim() != n + m {
        return Err(Error::DimensionMismatch(format!(
            "Pre needs X in R^{n} and S in R^{}, got R^{} and R^{}",
            n + m,
            x.dim(),
            s.dim()
        )));
    }
    if x.is_trivially_empty() {
        return Ok(HPolytope::empty(n));
    }
    let target = match sys.disturbance() {
        Some((e, d)) => x.erode_rows(e, d)?,
        None => x.clone(),
    };
    let mut ab = DMatrix::zeros(n, n + m);
    ab.view_mut((0, 0), (n, n)).copy_from(sys.a());
    ab.view_mut((0, n), (n, m)).copy_from(sys.b());
    let lifted = target.affine_preimage(&ab, &DVector::zeros(n))?.intersect(s)?;
    if lifted.is_empty()? {
        return Ok(HPolytope::empty(n));
    }
    match lifted.project(n) {
        Err(Error::RowLimit { .. }) if n <= 2 => lifted.project_low_dim(n),
        other => other,
    }
}

/// `Pre^k(X, S)`, the k-fold composition.
pub fn pre_k<S: Dynamics + ?Sized>(sys: &S, x: &HPolytope, s: &HPolytope, k: usize) -> Result<HPolytope> {
    let mut cur = x.clone();
    for _ in 0..k {
        cur = pre(sys, &cur, s)?;
        if cur.is_trivially_empty() {
            break;
        }
    }
    Ok(cur)
}

#[derive(Debug, Clone)]
pub struct InvariantOptions {
    pub max_iter: usize,
    /// Relative slack of the termination containment test.
    pub tol: f64,
    /// Known outer bound of the maximal set, used as the starting iterate.
    pub initial: Option<HPolytope>,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for InvariantOptions {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-10, initial: None, cancel: None }
    }
}

#[derive(Debug, Clone)]
pub struct InvariantResult {
    pub set: HPolytope,
    pub converged: bool,
    pub iterations: usize,
}

/// Outside-in fixed point `X_{k+1} = Pre(X_k, S) ∩ X₀`, `X₀ = Proj_x(S)`.
///
/// Stops once `X_k ⊆ X_{k+1}` within `tol`. Every iterate contains the maximal
/// invariant set, so a non-converged result is still an outer approximation.
pub fn max_invariant_set<S: Dynamics + ?Sized>(sys: &S, s: &HPolytope, opts: &InvariantOptions) -> Result<InvariantResult> {
    let n = sys.n();
    let x0 = s.project_auto(n)?;
    let mut cur = match &opts.initial {
        Some(init) => x0.intersect(init)?.remove_redundancy()?,
        None => x0.clone(),
    };
    for it in 1..=opts.max_iter {
        if let Some(flag) = &opts.cancel {
            if flag.load(Ordering::Relaxed) {
                return Err(Error::Cancelled);
            }
        }
        let next = pre(sys, &cur, s)?.intersect(&x0)?.remove_redundancy()?;
        if next.is_trivially_empty() || next.is_empty()? {
            return Ok(InvariantResult { set: HPolytope::empty(n), converged: true, iterations: it });
        }
        if next.contains(&cur, opts.tol)? {
            return Ok(InvariantResult { set: next, converged: true, iterations: it });
        }
        cur = next;
    }
    Ok(InvariantResult { set: cur, converged: false, iterations: opts.max_iter })
}

/// Maximal CIS of D(Σ_p) from the maximal CIS of D(Σ):
/// `Pre^p_{D(Σ_p)}(C_max,co × D^p, S_xu,p × D)`.
pub fn cmax_p_co(sys: &LinearSystem, p: usize, c_max_co: &HPolytope) -> Result<HPolytope> {
    if p == 0 {
        return Ok(c_max_co.clone());
    }
    let co = collaborative_augmented(sys, p);
    let start = c_max_co.cartesian_product(&sys.d.power(p));
    pre_k(&co, &start, &co.s, p)
}

/// Whether `X ⊆ Pre^N(λX, S)` within [`TAU_SET`].
pub fn check_contractive<S: Dynamics + ?Sized>(sys: &S, x: &HPolytope, s: &HPolytope, n_steps: usize, lambda: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!("contraction factor {lambda} outside [0, 1]")));
    }
    if n_steps == 0 {
        return Err(Error::InvalidInput("contraction needs at least one step".into()));
    }
    let target = pre_k(sys, &x.scale(lambda)?, s, n_steps)?;
    target.contains(x, TAU_SET)
}

/// A point of `C` outside `Pre(C, S)`, if any; `None` certifies invariance.
pub fn invariance_violation<S: Dynamics + ?Sized>(sys: &S, c: &HPolytope, s: &HPolytope, tol: f64) -> Result<Option<Vec<f64>>> {
    if c.is_empty()? {
        return Ok(None);
    }
    let pc = pre(sys, c, s)?;
    if pc.is_trivially_empty() || pc.is_empty()? {
        let (_, x) = c.support_point(&DVector::zeros(c.dim()))?;
        return Ok(Some(x.iter().copied().collect()));
    }
    for i in 0..pc.num_rows() {
        let row = pc.h_mat().row(i).transpose();
        let nrm = row.norm();
        if nrm <= 1e-14 {
            continue;
        }
        let (s_val, x) = c.support_point(&row)?;
        let rhs = pc.h_vec()[i];
        if s_val / nrm > rhs / nrm + tol * (rhs / nrm).abs().max(1.0) {
            return Ok(Some(x.iter().copied().collect()));
        }
    }
    Ok(None)
}

/// Inner and outer bounds on the maximal RCIS of Σ_p from preview `p′ <= p`.
#[derive(Debug, Clone)]
pub struct PreviewBounds {
    /// `C_max,p′ × D^{p−p′}`, itself an RCIS of Σ_p.
    pub inner: HPolytope,
    /// `C_max,p′,co × D^{p−p′}`.
    pub outer: HPolytope,
}

pub fn theorem1_bounds(
    sys: &LinearSystem,
    p: usize,
    p_prime: usize,
    c_max_p_prime: &HPolytope,
    c_max_co: &HPolytope,
) -> Result<PreviewBounds> {
    if p_prime > p {
        return Err(Error::InvalidInput(format!("p' = {p_prime} exceeds p = {p}")));
    }
    let l = sys.l();
    if c_max_p_prime.dim() != sys.n() + p_prime * l {
        return Err(Error::DimensionMismatch("C_max,p' has the wrong dimension".into()));
    }
    let tail = sys.d.power(p - p_prime);
    let inner = if p == p_prime { c_max_p_prime.clone() } else { c_max_p_prime.cartesian_product(&tail) };
    let co = cmax_p_co(sys, p_prime, c_max_co)?;
    let outer = if p == p_prime { co } else { co.cartesian_product(&tail) };
    Ok(PreviewBounds { inner, outer })
}

/// Maximal RCIS of Σ_p by direct fixed-point iteration, warm-started from the
/// outer bound `C_max,p,co` when `c_max_co` is supplied.
pub fn max_rcis_preview(sys: &LinearSystem, p: usize, c_max_co: Option<&HPolytope>, opts: &InvariantOptions) -> Result<InvariantResult> {
    let sp = augment(sys, p);
    let mut o = opts.clone();
    if let Some(cc) = c_max_co {
        let outer = cmax_p_co(sys, p, cc)?;
        o.initial = Some(match &o.initial {
            Some(i) => i.intersect(&outer)?,
            None => outer,
        });
    }
    max_invariant_set(&sp, &sp.s_xu, &o)
}
