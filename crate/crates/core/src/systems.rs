//! System views: the plant Σ, its preview augmentation Σ_p, and the
//! disturbance-collaborative system D(Σ) in which the disturbance is a second
//! control input.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::HPolytope;
use crate::solver::{controllability_rank, solve_dare, solve_lp, LpProblem, LpStatus};

/// Common view used by the backward-reachability operator.
pub trait Dynamics {
    fn a(&self) -> &DMatrix<f64>;
    fn b(&self) -> &DMatrix<f64>;
    /// `(E, D)` for systems with an adversarial disturbance.
    fn disturbance(&self) -> Option<(&DMatrix<f64>, &HPolytope)>;
    /// State-input safe set over `(x, u)`.
    fn safe_set(&self) -> &HPolytope;

    fn n(&self) -> usize {
        self.a().nrows()
    }

    fn m(&self) -> usize {
        self.b().ncols()
    }
}

/// `x⁺ = Ax + Bu + Ed`, `d ∈ D`, with safe set `S_xu` over `(x, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    #[serde(rename = "A", with = "crate::serde_mat")]
    pub a: DMatrix<f64>,
    #[serde(rename = "B", with = "crate::serde_mat")]
    pub b: DMatrix<f64>,
    #[serde(rename = "E", with = "crate::serde_mat")]
    pub e: DMatrix<f64>,
    #[serde(rename = "D")]
    pub d: HPolytope,
    #[serde(rename = "S_xu")]
    pub s_xu: HPolytope,
}

/// `x⁺ = Ax + Bu` with safe set `S` over `(x, u)`; no disturbance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicSystem {
    #[serde(rename = "A", with = "crate::serde_mat")]
    pub a: DMatrix<f64>,
    #[serde(rename = "B", with = "crate::serde_mat")]
    pub b: DMatrix<f64>,
    #[serde(rename = "S")]
    pub s: HPolytope,
}

/// A forced equilibrium `Ax_e + Bu_e + Ed_e = x_e` and its safety margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub x_e: Vec<f64>,
    pub u_e: Vec<f64>,
    pub d_e: Vec<f64>,
    pub margin: f64,
}

/// Whether the equilibrium search asks for a ball around `x_e` inside the
/// state set (`Strict`) or only `x_e` itself (`Relaxed`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumVariant {
    Strict,
    Relaxed,
}

impl Dynamics for LinearSystem {
    fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    fn disturbance(&self) -> Option<(&DMatrix<f64>, &HPolytope)> {
        Some((&self.e, &self.d))
    }
    fn safe_set(&self) -> &HPolytope {
        &self.s_xu
    }
}

impl Dynamics for DeterministicSystem {
    fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    fn disturbance(&self) -> Option<(&DMatrix<f64>, &HPolytope)> {
        None
    }
    fn safe_set(&self) -> &HPolytope {
        &self.s
    }
}

impl Equilibrium {
    pub fn zero(n: usize, m: usize, l: usize) -> Self {
        Self { x_e: vec![0.0; n], u_e: vec![0.0; m], d_e: vec![0.0; l], margin: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        self.x_e.iter().chain(&self.u_e).chain(&self.d_e).all(|&v| v == 0.0)
    }

    pub fn negated(&self) -> Self {
        Self {
            x_e: self.x_e.iter().map(|v| -v).collect(),
            u_e: self.u_e.iter().map(|v| -v).collect(),
            d_e: self.d_e.iter().map(|v| -v).collect(),
            margin: self.margin,
        }
    }
}

impl LinearSystem {
    /// Checks shapes and that `D` and `S_xu` are nonempty and bounded.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, e: DMatrix<f64>, d: HPolytope, s_xu: HPolytope) -> Result<Self> {
        let sys = Self { a, b, e, d, s_xu };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n {
            return Err(Error::DimensionMismatch(format!("A is {}x{}", n, self.a.ncols())));
        }
        if self.b.nrows() != n || self.e.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows and E has {} rows, expected {n}",
                self.b.nrows(),
                self.e.nrows()
            )));
        }
        if self.d.dim() != self.e.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "D lives in R^{} but E has {} columns",
                self.d.dim(),
                self.e.ncols()
            )));
        }
        if self.s_xu.dim() != n + self.b.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "S_xu lives in R^{} but n + m = {}",
                self.s_xu.dim(),
                n + self.b.ncols()
            )));
        }
        if self.d.is_empty()? {
            return Err(Error::InvalidInput("disturbance set D is empty".into()));
        }
        if !self.d.is_bounded()? {
            return Err(Error::InvalidInput("disturbance set D is unbounded".into()));
        }
        if self.s_xu.is_empty()? {
            return Err(Error::InvalidInput("safe set S_xu is empty".into()));
        }
        if !self.s_xu.is_bounded()? {
            return Err(Error::InvalidInput("safe set S_xu is unbounded".into()));
        }
        Ok(())
    }

    pub fn l(&self) -> usize {
        self.e.ncols()
    }

    /// `Ax + Bu + Ed`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.e * d
    }

    /// Safe set restricted to states, `Proj_x(S_xu)`.
    pub fn state_constraints(&self) -> Result<HPolytope> {
        self.s_xu.project_auto(self.n())
    }
}

impl DeterministicSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, s: HPolytope) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || s.dim() != n + b.ncols() {
            return Err(Error::DimensionMismatch("deterministic system shapes are inconsistent".into()));
        }
        Ok(Self { a, b, s })
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    /// Rank test on the controllability matrix.
    pub fn is_controllable(&self) -> bool {
        controllability_rank(&self.a, &self.b) == self.a.nrows()
    }

    /// Whether some linear feedback makes `A + BK` Schur stable.
    pub fn is_stabilizable(&self) -> bool {
        is_stabilizable(&self.a, &self.b)
    }
}

pub fn is_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let m = b.ncols();
    if m == 0 {
        return crate::solver::spectral_radius(a) < 1.0;
    }
    solve_dare(a, b, &DMatrix::identity(n, n), &DMatrix::identity(m, m)).is_ok()
}

/// Rows `[H_x, 0, H_u]` of `S_xu` lifted to `(x, d_{1:p}, u)`, followed by `D^p`.
fn augmented_safe_set(sys: &LinearSystem, p: usize) -> HPolytope {
    let (n, m, l) = (sys.n(), sys.m(), sys.l());
    let s = &sys.s_xu;
    let q = s.num_rows();
    let np = n + p * l;
    let mut h = DMatrix::zeros(q, np + m);
    for i in 0..q {
        for j in 0..n {
            h[(i, j)] = s.h_mat()[(i, j)];
        }
        for j in 0..m {
            h[(i, np + j)] = s.h_mat()[(i, n + j)];
        }
    }
    let lifted = HPolytope::new(h, s.h_vec().clone()).expect("finite");
    if p == 0 {
        return lifted;
    }
    // D^p on the preview block, embedded between x and u.
    let dp = sys.d.power(p);
    let mut hd = DMatrix::zeros(dp.num_rows(), np + m);
    hd.view_mut((0, n), (dp.num_rows(), p * l)).copy_from(dp.h_mat());
    let dp_rows = HPolytope::new(hd, dp.h_vec().clone()).expect("finite");
    lifted.intersect(&dp_rows).expect("same dimension")
}

/// The p-augmented system Σ_p with state `(x, d₁, …, d_p)`.
pub fn augment(sys: &LinearSystem, p: usize) -> LinearSystem {
    if p == 0 {
        return sys.clone();
    }
    let (n, m, l) = (sys.n(), sys.m(), sys.l());
    let np = n + p * l;
    let mut a = DMatrix::zeros(np, np);
    a.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    a.view_mut((0, n), (n, l)).copy_from(&sys.e);
    for i in 0..p.saturating_sub(1) {
        let r = n + i * l;
        let c = n + (i + 1) * l;
        a.view_mut((r, c), (l, l)).copy_from(&DMatrix::identity(l, l));
    }
    let mut b = DMatrix::zeros(np, m);
    b.view_mut((0, 0), (n, m)).copy_from(&sys.b);
    let mut e = DMatrix::zeros(np, l);
    e.view_mut((np - l, 0), (l, l)).copy_from(&DMatrix::identity(l, l));
    LinearSystem { a, b, e, d: sys.d.clone(), s_xu: augmented_safe_set(sys, p) }
}

/// D(Σ): the disturbance becomes a second input, safe set `S_xu × D`.
pub fn collaborative(sys: &LinearSystem) -> DeterministicSystem {
    let (n, m, l) = (sys.n(), sys.m(), sys.l());
    let mut b = DMatrix::zeros(n, m + l);
    b.view_mut((0, 0), (n, m)).copy_from(&sys.b);
    b.view_mut((0, m), (n, l)).copy_from(&sys.e);
    DeterministicSystem { a: sys.a.clone(), b, s: sys.s_xu.cartesian_product(&sys.d) }
}

/// D(Σ_p), with safe set `S_xu,p × D`.
pub fn collaborative_augmented(sys: &LinearSystem, p: usize) -> DeterministicSystem {
    collaborative(&augment(sys, p))
}

/// Searches a forced equilibrium maximising the margin `ε` such that
/// `(x_e, u_e, d_e) + ε·B ⊆ S_xu × D` and, depending on the variant,
/// `x_e + ε·B(n) ⊆ state_set` or `x_e ∈ state_set`.
///
/// `Err(Infeasible)` means no equilibrium exists in the constraint set; a
/// margin of 0 means one exists only on the boundary. Among maximisers the one
/// of least 1-norm is returned, so symmetric problems give the origin.
pub fn find_forced_equilibrium(
    sys: &LinearSystem,
    state_set: Option<&HPolytope>,
    variant: EquilibriumVariant,
) -> Result<Equilibrium> {
    let (n, m, l) = (sys.n(), sys.m(), sys.l());
    let nz = n + m + l;
    if let Some(c) = state_set {
        if c.dim() != n {
            return Err(Error::DimensionMismatch("equilibrium state set has wrong dimension".into()));
        }
    }
    let sd = sys.s_xu.cartesian_product(&sys.d);
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut push = |hrow: Vec<f64>, rhs: f64, with_eps: bool| {
        let l1: f64 = hrow.iter().map(|v| v.abs()).sum();
        let mut r = hrow;
        r.push(if with_eps { l1 } else { 0.0 });
        rows.push((r, rhs));
    };
    for i in 0..sd.num_rows() {
        push(sd.h_mat().row(i).iter().copied().collect(), sd.h_vec()[i], true);
    }
    if let Some(c) = state_set {
        for i in 0..c.num_rows() {
            let mut r: Vec<f64> = c.h_mat().row(i).iter().copied().collect();
            r.extend(std::iter::repeat_n(0.0, m + l));
            push(r, c.h_vec()[i], variant == EquilibriumVariant::Strict);
        }
    }
    let nv = nz + 1;
    let a_ub = DMatrix::from_fn(rows.len(), nv, |i, j| rows[i].0[j]);
    let b_ub = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let mut a_eq = DMatrix::zeros(n, nv);
    a_eq.view_mut((0, 0), (n, n)).copy_from(&(&sys.a - DMatrix::identity(n, n)));
    a_eq.view_mut((0, n), (n, m)).copy_from(&sys.b);
    a_eq.view_mut((0, n + m), (n, l)).copy_from(&sys.e);
    let b_eq = DVector::zeros(n);
    let mut nonneg = vec![false; nv];
    nonneg[nz] = true;
    let mut cost = DVector::zeros(nv);
    cost[nz] = -1.0;
    let lp = LpProblem::new(nv)
        .minimize(cost)
        .subject_to_ub(a_ub.clone(), b_ub.clone())
        .subject_to_eq(a_eq.clone(), b_eq.clone())
        .nonnegative(nonneg.clone());
    let sol = solve_lp(&lp)?;
    let eps = match sol.status {
        LpStatus::Optimal => sol.point[nz].max(0.0),
        LpStatus::Infeasible => return Err(Error::Infeasible),
        LpStatus::Unbounded => return Err(Error::Numerical("equilibrium margin unbounded".into())),
    };
    let mut z = sol.point.rows(0, nz).into_owned();

    // Second stage: least 1-norm point with the same margin.
    // variables: z (free) | ε (>= target) | s (>= |z|)
    let nv2 = nv + nz;
    let extra = 2 * nz + 1;
    let mut a2 = DMatrix::zeros(rows.len() + extra, nv2);
    a2.view_mut((0, 0), (rows.len(), nv)).copy_from(&a_ub);
    let mut b2 = DVector::zeros(rows.len() + extra);
    b2.rows_mut(0, rows.len()).copy_from(&b_ub);
    for k in 0..nz {
        let r = rows.len() + 2 * k;
        a2[(r, k)] = 1.0;
        a2[(r, nv + k)] = -1.0;
        a2[(r + 1, k)] = -1.0;
        a2[(r + 1, nv + k)] = -1.0;
    }
    let r = rows.len() + 2 * nz;
    a2[(r, nz)] = -1.0;
    b2[r] = -(eps - 1e-10 * (1.0 + eps)).max(0.0);
    let mut aeq2 = DMatrix::zeros(n, nv2);
    aeq2.view_mut((0, 0), (n, nv)).copy_from(&a_eq);
    let mut cost2 = DVector::zeros(nv2);
    for k in 0..nz {
        cost2[nv + k] = 1.0;
    }
    let mut nonneg2 = nonneg;
    nonneg2.extend(std::iter::repeat_n(true, nz));
    let lp2 = LpProblem::new(nv2)
        .minimize(cost2)
        .subject_to_ub(a2, b2)
        .subject_to_eq(aeq2, b_eq)
        .nonnegative(nonneg2);
    if let Ok(s2) = solve_lp(&lp2) {
        if s2.is_optimal() {
            z = s2.point.rows(0, nz).into_owned();
            for v in z.iter_mut() {
                if v.abs() < 1e-12 {
                    *v = 0.0;
                }
            }
        }
    }
    Ok(Equilibrium {
        x_e: z.rows(0, n).iter().copied().collect(),
        u_e: z.rows(n, m).iter().copied().collect(),
        d_e: z.rows(n + m, l).iter().copied().collect(),
        margin: eps,
    })
}

/// Moves the origin to the equilibrium: `S_xu − (x_e, u_e)` and `D − d_e`.
pub fn shift_origin(sys: &LinearSystem, eq: &Equilibrium) -> Result<LinearSystem> {
    let (n, m, l) = (sys.n(), sys.m(), sys.l());
    if eq.x_e.len() != n || eq.u_e.len() != m || eq.d_e.len() != l {
        return Err(Error::DimensionMismatch("equilibrium does not match system dimensions".into()));
    }
    let xu = DVector::from_iterator(n + m, eq.x_e.iter().chain(&eq.u_e).map(|v| -v));
    let d = DVector::from_iterator(l, eq.d_e.iter().map(|v| -v));
    Ok(LinearSystem {
        a: sys.a.clone(),
        b: sys.b.clone(),
        e: sys.e.clone(),
        d: sys.d.translate(&d)?,
        s_xu: sys.s_xu.translate(&xu)?,
    })
}
