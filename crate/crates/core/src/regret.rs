//! Certified upper bounds on the safety regret
//! `d_p = d(Proj_n(C_max,p), C_max,co)`.
//!
//! Certificates are computed in coordinates centred at a forced equilibrium of
//! D(Σ). Hausdorff distances are translation invariant, so the bounds apply
//! unchanged in the original coordinates.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::ellipsoid::{find_contractive_ellipsoid, max_c0, min_c_out, theorem6_params};
use crate::error::{Error, Result};
use crate::invariance::{max_rcis_preview, pre, pre_k, InvariantOptions};
use crate::polytope::{containment_ratio, containment_ratio_projected, hausdorff_nested_with, HPolytope, RadiusMode, VERTEX_DIM_LIMIT};
use crate::solver::controllability_rank;
use crate::systems::{collaborative, find_forced_equilibrium, shift_origin, Dynamics, Equilibrium, EquilibriumVariant, LinearSystem};

/// Default state-plus-preview dimension up to which `true_dp` runs.
pub const TRUE_DP_BUDGET: usize = 8;
/// Default ladder length for [`algorithm3`].
pub const DEFAULT_K_MAX: usize = 50;
/// Slack of the ladder equality test. It sits below the accuracy of a
/// computed `C_max,co`, so geometric convergence is not mistaken for finite
/// convergence at machine precision.
pub const DEFAULT_LADDER_TAU: f64 = 1e-12;
/// Largest step count for which the contraction of a certificate is replayed.
const VERIFY_STEP_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateMethod {
    Alg1,
    Alg1Refined,
    Alg2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda0Method {
    Baseline,
    Exact,
    Encoded,
}

/// Everything needed to evaluate the `d_p` bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCertificate {
    pub method: CertificateMethod,
    pub lambda0: f64,
    pub gamma: f64,
    #[serde(rename = "N")]
    pub n_steps: usize,
    pub lambda: f64,
    /// `None` when `λ0 = 0`, where the burn-in never ends.
    pub k0: Option<usize>,
    pub a: f64,
    pub c: f64,
    pub r_co: f64,
    pub p0: usize,
    pub shift: Equilibrium,
    /// False when an input was only an outer approximation or a check could
    /// not be replayed; the bound is then heuristic.
    pub certified: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Outcome of the finite-convergence test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `None` means no convergence detected within `k_max`.
    pub p_bar: Option<usize>,
    pub p0: usize,
    pub ladder: Vec<HPolytope>,
    pub distances: Vec<f64>,
    pub k_max: usize,
}

/// `k0 = max(0, ⌈(log λ0 − log γ)/log λ − 1⌉)`; `None` for `λ0 = 0`.
pub fn k0_of(lambda0: f64, gamma: f64, lambda: f64) -> Option<usize> {
    if lambda0 <= 0.0 {
        return None;
    }
    if lambda0 >= gamma || lambda <= 0.0 {
        return Some(0);
    }
    if lambda >= 1.0 {
        return None;
    }
    let v = ((lambda0.ln() - gamma.ln()) / lambda.ln() - 1.0).ceil();
    Some(if v > 0.0 { v as usize } else { 0 })
}

impl RegretCertificate {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        method: CertificateMethod,
        lambda0: f64,
        gamma: f64,
        n_steps: usize,
        lambda: f64,
        r_co: f64,
        p0: usize,
        shift: Equilibrium,
    ) -> Self {
        let (k0, a, c) = if method == CertificateMethod::Alg2 {
            (Some(0), 1.0 - gamma, 1.0 - lambda0)
        } else {
            let a = (1.0 - gamma) / (1.0 - gamma * lambda);
            let k0 = k0_of(lambda0, gamma, lambda);
            let c = match k0 {
                Some(k) => (1.0 - lambda0 / lambda.powi(k as i32)) * a.powi(k as i32),
                None => 1.0,
            };
            (k0, a, c)
        };
        Self { method, lambda0, gamma, n_steps, lambda, k0, a, c, r_co, p0, shift, certified: true, notes: Vec::new() }
    }

    /// Stamps the certificate as resting on an outer approximation of
    /// `C_max,co`.
    pub fn mark_outer_approximate(&mut self) {
        self.certified = false;
        self.notes.push("outer-approximate C_max,co".into());
    }

    /// Upper bound on `d_p` for `p >= p0`.
    pub fn bound_dp(&self, p: usize) -> Result<f64> {
        if p < self.p0 {
            return Err(Error::InvalidInput(format!("p = {p} is below p0 = {}", self.p0)));
        }
        let j = (p - self.p0) / self.n_steps;
        let v = match self.k0 {
            None => (1.0 - self.lambda0) * self.r_co,
            Some(k0) if j <= k0 => (1.0 - self.lambda0 * self.lambda.powi(-(j as i32))).max(0.0) * self.r_co,
            Some(_) => self.c * self.a.powi(j as i32) * self.r_co,
        };
        Ok(v.max(0.0))
    }

    /// Upper bound on `d(Proj_n(C_max,p), Proj_n(C_max,p+N))`. Before the
    /// burn-in ends this falls back to `bound_dp(p) + bound_dp(p + N)`.
    pub fn bound_marginal(&self, p: usize) -> Result<f64> {
        if p < self.p0 {
            return Err(Error::InvalidInput(format!("p = {p} is below p0 = {}", self.p0)));
        }
        match self.k0 {
            Some(k0) if p >= self.p0 + self.n_steps * (k0 + 1) => {
                let j = (p - self.p0) / self.n_steps;
                Ok(self.c * (1.0 + self.a) * self.a.powi(j as i32) * self.r_co)
            }
            _ => Ok(self.bound_dp(p)? + self.bound_dp(p + self.n_steps)?),
        }
    }
}

/// Pointwise minimum of several certificates' bounds.
pub fn bound_envelope(certs: &[RegretCertificate], p: usize) -> Result<f64> {
    let mut best = f64::INFINITY;
    for c in certs {
        if p >= c.p0 {
            best = best.min(c.bound_dp(p)?);
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::InvalidInput("no certificate covers this horizon".into()))
    }
}

fn radius_mode(n: usize) -> RadiusMode {
    if n <= VERTEX_DIM_LIMIT {
        RadiusMode::Exact
    } else {
        RadiusMode::Box
    }
}

/// `1 / r*` with `P1 ⊆ r*·P2`, or 0 when `P2` does not have the origin in its
/// interior.
fn inverse_ratio(p1: &HPolytope, p2: &HPolytope) -> Result<f64> {
    if !p2.is_normal_form() {
        return Ok(0.0);
    }
    let r = containment_ratio(p1, p2)?;
    Ok(if r > 0.0 { (1.0 / r).min(1.0) } else { 1.0 })
}

/// Lower estimate of the largest `λ0` with `λ0·C_max,co ⊆ Proj_n(C_max,p0)`.
///
/// `Exact` expects the projection, `Encoded` the lifted `C_max,p0`, and
/// `Baseline` ignores the second set and returns `ε*/r*` with
/// `C_max,co ⊆ r*·B(n)`. A baseline with `ε* = 0` yields 0.
pub fn estimate_lambda0(c_max_co: &HPolytope, c_p0: &HPolytope, method: Lambda0Method, eps_star: f64) -> Result<f64> {
    let n = c_max_co.dim();
    match method {
        Lambda0Method::Baseline => {
            if eps_star <= 0.0 {
                return Ok(0.0);
            }
            let r = containment_ratio(c_max_co, &HPolytope::unit_box(n))?;
            Ok(if r > 0.0 { (eps_star / r).min(1.0) } else { 1.0 })
        }
        Lambda0Method::Exact => {
            if c_p0.dim() != n {
                return Err(Error::DimensionMismatch("exact estimate needs the projection of C_max,p0".into()));
            }
            inverse_ratio(c_max_co, c_p0)
        }
        Lambda0Method::Encoded => {
            if !c_p0.is_normal_form() {
                return Ok(0.0);
            }
            Ok(match containment_ratio_projected(c_max_co, c_p0)? {
                Some(r) if r > 0.0 => (1.0 / r).min(1.0),
                Some(_) => 1.0,
                None => 0.0,
            })
        }
    }
}

/// Inputs shared by the two parameter-estimation algorithms.
#[derive(Debug, Clone)]
pub struct RegretInputs<'a> {
    pub sys: &'a LinearSystem,
    pub c_max_co: &'a HPolytope,
    /// `C_max,p0` in `R^{n + p0·l}`.
    pub c_max_p0: &'a HPolytope,
    pub p0: usize,
    /// `Proj_n(C_max,p0)` if already known.
    pub projection: Option<&'a HPolytope>,
}

struct Normalised {
    sys: LinearSystem,
    c_co: HPolytope,
    c_p0: HPolytope,
    proj: Option<HPolytope>,
    shift: Equilibrium,
    eps: f64,
}

/// Largest `ε` with `ε·B ⊆ S_xu × D` (and `ε·B(n) ⊆ proj` when `strict`) at
/// the origin, using the 1-norm of each row.
fn origin_margin(sys: &LinearSystem, proj: Option<&HPolytope>, strict: bool) -> f64 {
    let sd = sys.s_xu.cartesian_product(&sys.d);
    let mut eps = f64::INFINITY;
    let mut sets = vec![&sd];
    if strict {
        if let Some(p) = proj {
            sets.push(p);
        }
    }
    for set in sets {
        for i in 0..set.num_rows() {
            let l1: f64 = set.h_mat().row(i).iter().map(|v| v.abs()).sum();
            if l1 > 1e-14 {
                eps = eps.min(set.h_vec()[i] / l1);
            } else if set.h_vec()[i] < 0.0 {
                eps = 0.0;
            }
        }
    }
    if !strict {
        if let Some(p) = proj {
            if !p.contains_point(&DVector::zeros(p.dim()), 0.0) {
                return 0.0;
            }
        }
    }
    eps.max(0.0)
}

fn normalise(inp: &RegretInputs, variant: EquilibriumVariant) -> Result<Normalised> {
    let sys = inp.sys;
    let (n, l) = (sys.n(), sys.l());
    if inp.c_max_co.dim() != n {
        return Err(Error::DimensionMismatch("C_max,co must live in the state space".into()));
    }
    if inp.c_max_p0.dim() != n + inp.p0 * l {
        return Err(Error::DimensionMismatch(format!(
            "C_max,p0 must have dimension {}, got {}",
            n + inp.p0 * l,
            inp.c_max_p0.dim()
        )));
    }
    let proj = match inp.projection {
        Some(p) => Some(p.clone()),
        None => match inp.c_max_p0.project_auto(n) {
            Ok(p) => Some(p),
            Err(Error::RowLimit { .. }) => None,
            Err(e) => return Err(e),
        },
    };
    let strict = variant == EquilibriumVariant::Strict;
    let eps0 = origin_margin(sys, proj.as_ref(), strict);
    let eq = if eps0 > 0.0 {
        let mut z = Equilibrium::zero(n, sys.m(), l);
        z.margin = eps0;
        z
    } else {
        let state_set = match &proj {
            Some(p) => p,
            None => {
                return Err(Error::AssumptionUnverifiable(
                    "origin is not interior and the projection of C_max,p0 is unavailable".into(),
                ))
            }
        };
        match find_forced_equilibrium(sys, Some(state_set), variant) {
            Ok(eq) => eq,
            Err(Error::Infeasible) => {
                return Err(Error::AssumptionUnverifiable("no forced equilibrium in the safe set".into()))
            }
            Err(e) => return Err(e),
        }
    };
    if eq.margin <= 0.0 {
        return Err(Error::AssumptionUnverifiable(
            "no forced equilibrium with a positive interior margin".into(),
        ));
    }
    let xe = DVector::from_vec(eq.x_e.clone());
    let mut lifted = eq.x_e.clone();
    for _ in 0..inp.p0 {
        lifted.extend_from_slice(&eq.d_e);
    }
    let lifted = DVector::from_vec(lifted);
    Ok(Normalised {
        sys: shift_origin(sys, &eq)?,
        c_co: inp.c_max_co.translate(&-&xe)?,
        c_p0: inp.c_max_p0.translate(&-lifted)?,
        proj: proj.map(|p| p.translate(&-&xe)).transpose()?,
        shift: eq.clone(),
        eps: eq.margin,
    })
}

fn best_lambda0(nz: &Normalised, baseline: bool) -> Result<f64> {
    let mut best = if baseline {
        estimate_lambda0(&nz.c_co, &nz.c_co, Lambda0Method::Baseline, nz.eps)?
    } else {
        0.0
    };
    if let Some(p) = &nz.proj {
        best = best.max(estimate_lambda0(&nz.c_co, p, Lambda0Method::Exact, nz.eps)?);
    } else if nz.c_p0.dim() <= 12 {
        best = best.max(estimate_lambda0(&nz.c_co, &nz.c_p0, Lambda0Method::Encoded, nz.eps)?);
    }
    Ok(best)
}

/// Certificate from a contractive ellipsoid of D(Σ), optionally refined by
/// the exact contraction of `γ·C_max,co`.
pub fn algorithm1(inp: &RegretInputs, refine: bool) -> Result<RegretCertificate> {
    let nz = normalise(inp, EquilibriumVariant::Strict)?;
    let lambda0 = best_lambda0(&nz, true)?;
    if lambda0 <= 0.0 {
        return Err(Error::AssumptionUnverifiable("initial factor λ0 is zero".into()));
    }
    let (n, m) = (nz.sys.n(), nz.sys.m());
    let co = collaborative(&nz.sys);
    let ell = find_contractive_ellipsoid(&co, m)?;
    let c0 = max_c0(&ell, &nz.sys.s_xu, &nz.sys.d)?;
    let c_out = min_c_out(&nz.c_co, &ell.q, radius_mode(n))?.max(c0);
    let params = theorem6_params(c0, c_out, ell.lambda_a)?;
    let r_co = nz.c_co.radius_from_origin(radius_mode(n))?;
    let (mut gamma, mut lambda) = (params.gamma, params.lambda);
    let mut verified = false;
    let mut notes = Vec::new();
    if params.n_steps <= VERIFY_STEP_CAP {
        // γ* with γ*·C ⊆ Pre^N(λγ·C); γ* >= γ replays the contraction.
        let target = pre_k(&co, &nz.c_co.scale(lambda * gamma)?, &co.s, params.n_steps)?;
        let g_star = inverse_ratio(&nz.c_co, &target)?;
        verified = g_star >= gamma * (1.0 - 1e-9);
        if refine && verified && g_star > gamma {
            lambda = lambda * gamma / g_star;
            gamma = g_star;
        }
    } else {
        notes.push(format!("contraction not replayed: N = {} exceeds {}", params.n_steps, VERIFY_STEP_CAP));
    }
    if !verified && notes.is_empty() {
        notes.push("contraction replay failed".into());
    }
    let method = if refine { CertificateMethod::Alg1Refined } else { CertificateMethod::Alg1 };
    let mut cert = RegretCertificate::assemble(method, lambda0, gamma, params.n_steps, lambda, r_co, inp.p0, nz.shift);
    cert.certified = verified;
    cert.notes = notes;
    Ok(cert)
}

/// Certificate for controllable D(Σ) with a user-chosen step size `N >= n`.
pub fn algorithm2(inp: &RegretInputs, n_steps: usize) -> Result<RegretCertificate> {
    let sys = inp.sys;
    let n = sys.n();
    if n_steps == 0 {
        return Err(Error::InvalidInput("step size N must be positive".into()));
    }
    let co0 = collaborative(sys);
    if controllability_rank(&co0.a, &co0.b) < n {
        return Err(Error::NotControllable("D(Σ) is not controllable; use algorithm 1".into()));
    }
    let nz = normalise(inp, EquilibriumVariant::Relaxed)?;
    let lambda0 = best_lambda0(&nz, false)?;
    let co = collaborative(&nz.sys);
    let c_n = pre_k(&co, &HPolytope::origin(n), &co.s, n_steps)?;
    let gamma_max = inverse_ratio(&nz.c_co, &c_n)?;
    if gamma_max <= 0.0 {
        return Err(Error::AssumptionUnverifiable(format!(
            "Pre^{n_steps}({{0}}) has empty interior; try N >= {n}"
        )));
    }
    let r_co = nz.c_co.radius_from_origin(radius_mode(n))?;
    Ok(RegretCertificate::assemble(CertificateMethod::Alg2, lambda0, gamma_max, n_steps, 0.0, r_co, inp.p0, nz.shift))
}

/// Ladder `C_k = Pre_{D(Σ)}(C_{k−1}, S_xu × D)` from `C_0 = Proj_n(C_max,p0)`,
/// stopping at the first `k` whose set contains `C_max,co` within the
/// relative slack `tau` (see [`DEFAULT_LADDER_TAU`]).
pub fn algorithm3(
    sys: &LinearSystem,
    c_max_co: &HPolytope,
    proj_c_p0: &HPolytope,
    p0: usize,
    k_max: usize,
    tau: f64,
) -> Result<ConvergenceReport> {
    let n = sys.n();
    if c_max_co.dim() != n || proj_c_p0.dim() != n {
        return Err(Error::DimensionMismatch("ladder sets must live in the state space".into()));
    }
    let co = collaborative(sys);
    let mode = radius_mode(n);
    let mut ladder = Vec::new();
    let mut distances = Vec::new();
    let mut cur = proj_c_p0.remove_redundancy()?;
    let mut p_bar = None;
    for k in 0..=k_max {
        distances.push(hausdorff_nested_with(&cur, c_max_co, mode)?);
        ladder.push(cur.clone());
        if cur.contains(c_max_co, tau)? {
            p_bar = Some(p0 + k);
            break;
        }
        if k == k_max {
            break;
        }
        cur = pre(&co, &cur, &co.s)?.remove_redundancy()?;
    }
    Ok(ConvergenceReport { p_bar, p0, ladder, distances, k_max })
}

/// Directly computed `d_p`: the maximal RCIS of Σ_p, projected and compared
/// with `C_max,co`.
pub fn true_dp(sys: &LinearSystem, p: usize, c_max_co: &HPolytope, budget: usize) -> Result<f64> {
    let dim = sys.n() + p * sys.l();
    if dim > budget {
        return Err(Error::BudgetExceeded { dim, budget });
    }
    let cp = max_rcis_preview(sys, p, Some(c_max_co), &InvariantOptions::default())?;
    let proj = cp.set.project_auto(sys.n())?;
    hausdorff_nested_with(&proj, c_max_co, radius_mode(sys.n()))
}
