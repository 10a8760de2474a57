//! Dense two-phase simplex.
//!
//! Problems here are small (a few hundred rows at most), so the solver keeps a
//! full tableau. Entering columns use Dantzig's rule; after a run of degenerate
//! pivots it switches to Bland's rule until the objective moves again, which
//! rules out cycling. The final basis is re-solved against the original
//! constraint matrix so the returned point is accurate to roughly machine
//! precision rather than to the accumulated tableau error.

#![allow(clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Feasibility tolerance on returned optimal points.
pub const TAU_FEAS: f64 = 1e-8;
/// Objective tolerance on non-degenerate instances.
pub const TAU_OBJ: f64 = 1e-7;

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-10;
const DEGENERATE_SWITCH: usize = 30;
const MAX_ITER: usize = 200_000;

/// `min cost·x` subject to `a_ub x <= b_ub`, `a_eq x = b_eq`, and `x_j >= 0`
/// for every `j` flagged in `nonneg` (other variables are free).
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub cost: DVector<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub nonneg: Vec<bool>,
}

impl LpProblem {
    /// Empty problem over `n` free variables with zero cost.
    pub fn new(n: usize) -> Self {
        Self {
            cost: DVector::zeros(n),
            a_ub: DMatrix::zeros(0, n),
            b_ub: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            nonneg: vec![false; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn minimize(mut self, cost: DVector<f64>) -> Self {
        self.cost = cost;
        self
    }

    pub fn subject_to_ub(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_ub = a;
        self.b_ub = b;
        self
    }

    pub fn subject_to_eq(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn nonnegative(mut self, flags: Vec<bool>) -> Self {
        self.nonneg = flags;
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.a_ub.ncols() != n || self.a_eq.ncols() != n || self.nonneg.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "LP with {n} variables has constraint matrices with {} / {} columns and {} sign flags",
                self.a_ub.ncols(),
                self.a_eq.ncols(),
                self.nonneg.len()
            )));
        }
        if self.a_ub.nrows() != self.b_ub.len() || self.a_eq.nrows() != self.b_eq.len() {
            return Err(Error::DimensionMismatch(
                "LP constraint rows and right-hand sides differ in length".into(),
            ));
        }
        let finite = self.cost.iter().all(|v| v.is_finite())
            && self.a_ub.iter().all(|v| v.is_finite())
            && self.b_ub.iter().all(|v| v.is_finite())
            && self.a_eq.iter().all(|v| v.is_finite())
            && self.b_eq.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("LP data contains non-finite entries".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub point: DVector<f64>,
    pub objective: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    fn with_status(status: LpStatus, n: usize) -> Self {
        let objective = match status {
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
            LpStatus::Optimal => 0.0,
        };
        Self { status, point: DVector::zeros(n), objective }
    }
}

struct Row {
    coef: Vec<f64>,
    rhs: f64,
    ub: bool,
}

/// Kind of a standard-form column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Col {
    Structural,
    Slack,
    Artificial,
}

struct Tableau {
    rows: usize,
    width: usize, // number of columns excluding rhs
    data: Vec<f64>,
    obj: Vec<f64>, // reduced costs, last entry = -objective
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.width + 1) + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.data[r * (self.width + 1) + self.width]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let stride = self.width + 1;
        let pv = self.data[pr * stride + pc];
        {
            let row = &mut self.data[pr * stride..(pr + 1) * stride];
            for v in row.iter_mut() {
                *v /= pv;
            }
            row[pc] = 1.0;
        }
        let pivot_row: Vec<f64> = self.data[pr * stride..(pr + 1) * stride].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * stride + pc];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.data[r * stride..(r + 1) * stride];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            row[pc] = 0.0;
        }
        let f = self.obj[pc];
        if f != 0.0 {
            for (v, p) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.obj[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    fn remove_row(&mut self, r: usize) {
        let stride = self.width + 1;
        self.data.drain(r * stride..(r + 1) * stride);
        self.basis.remove(r);
        self.rows -= 1;
    }

    /// Runs simplex iterations over columns for which `allowed` is true.
    /// Returns `Ok(true)` on optimality, `Ok(false)` on unboundedness.
    fn optimize(&mut self, allowed: &[bool]) -> Result<bool> {
        let mut degenerate_run = 0usize;
        let mut bland = false;
        for _ in 0..MAX_ITER {
            let entering = if bland {
                (0..self.width).find(|&c| allowed[c] && self.obj[c] < -COST_TOL)
            } else {
                let mut best = None;
                let mut best_val = -COST_TOL;
                for c in 0..self.width {
                    if allowed[c] && self.obj[c] < best_val {
                        best_val = self.obj[c];
                        best = Some(c);
                    }
                }
                best
            };
            let Some(pc) = entering else {
                return Ok(true);
            };

            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    match leave {
                        None => {
                            leave = Some(r);
                            best_ratio = ratio;
                        }
                        Some(l) => {
                            let tie = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + best_ratio.abs());
                            if ratio < best_ratio && !tie {
                                leave = Some(r);
                                best_ratio = ratio;
                            } else if tie {
                                let better = if bland {
                                    self.basis[r] < self.basis[l]
                                } else {
                                    a > self.at(l, pc)
                                };
                                if better {
                                    leave = Some(r);
                                    best_ratio = best_ratio.min(ratio);
                                }
                            }
                        }
                    }
                }
            }
            let Some(pr) = leave else {
                return Ok(false);
            };
            if best_ratio <= 1e-13 {
                degenerate_run += 1;
                if degenerate_run > DEGENERATE_SWITCH {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
            self.pivot(pr, pc);
        }
        Err(Error::Numerical("simplex iteration limit reached".into()))
    }
}

/// Solves a dense linear program. Infeasible and unbounded problems are
/// reported through [`LpStatus`], never as optimal.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution> {
    problem.validate()?;
    let n = problem.num_vars();

    // Standard-form columns.
    let mut cols: Vec<Col> = Vec::new();
    let mut var_cols: Vec<(usize, Option<usize>)> = Vec::with_capacity(n);
    for j in 0..n {
        let p = cols.len();
        cols.push(Col::Structural);
        if problem.nonneg[j] {
            var_cols.push((p, None));
        } else {
            cols.push(Col::Structural);
            var_cols.push((p, Some(p + 1)));
        }
    }
    let n_struct = cols.len();

    // Collect rows (coefficients over original variables, rhs, is_ub), scaled.
    let mut rows: Vec<Row> = Vec::new();
    let push_row = |rows: &mut Vec<Row>, coef: Vec<f64>, rhs: f64, ub: bool| -> bool {
        let scale = coef.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale <= 1e-14 {
            // Constant row: either vacuous or contradictory.
            return if ub { rhs >= -TAU_FEAS } else { rhs.abs() <= TAU_FEAS };
        }
        rows.push(Row { coef: coef.iter().map(|v| v / scale).collect(), rhs: rhs / scale, ub });
        true
    };
    for i in 0..problem.a_ub.nrows() {
        let coef: Vec<f64> = problem.a_ub.row(i).iter().copied().collect();
        if !push_row(&mut rows, coef, problem.b_ub[i], true) {
            return Ok(LpSolution::with_status(LpStatus::Infeasible, n));
        }
    }
    for i in 0..problem.a_eq.nrows() {
        let coef: Vec<f64> = problem.a_eq.row(i).iter().copied().collect();
        if !push_row(&mut rows, coef, problem.b_eq[i], false) {
            return Ok(LpSolution::with_status(LpStatus::Infeasible, n));
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.ub).count();
    let n_art = rows.iter().filter(|r| !r.ub || r.rhs < 0.0).count();
    let width = n_struct + n_slack + n_art;
    let stride = width + 1;
    let mut data = vec![0.0; m * stride];
    let mut basis = vec![0usize; m];
    for _ in 0..n_slack {
        cols.push(Col::Slack);
    }
    for _ in 0..n_art {
        cols.push(Col::Artificial);
    }

    let mut slack_idx = n_struct;
    let mut art_idx = n_struct + n_slack;
    for (r, row) in rows.iter().enumerate() {
        let sign = if row.rhs < 0.0 { -1.0 } else { 1.0 };
        let base = r * stride;
        for (j, &(p, neg)) in var_cols.iter().enumerate() {
            data[base + p] = sign * row.coef[j];
            if let Some(q) = neg {
                data[base + q] = -sign * row.coef[j];
            }
        }
        data[base + width] = sign * row.rhs;
        if row.ub {
            data[base + slack_idx] = sign;
            if sign > 0.0 {
                basis[r] = slack_idx;
            }
            slack_idx += 1;
        }
        if !row.ub || sign < 0.0 {
            data[base + art_idx] = 1.0;
            basis[r] = art_idx;
            art_idx += 1;
        }
    }

    let is_art: Vec<bool> = cols.iter().map(|c| matches!(c, Col::Artificial)).collect();
    let mut tab = Tableau { rows: m, width, data, obj: vec![0.0; stride], basis };

    // Phase 1.
    if n_art > 0 {
        for c in 0..width {
            if is_art[c] {
                tab.obj[c] = 1.0;
            }
        }
        for r in 0..m {
            if is_art[tab.basis[r]] {
                let base = r * stride;
                for c in 0..stride {
                    tab.obj[c] -= tab.data[base + c];
                }
            }
        }
        let all = vec![true; width];
        tab.optimize(&all)?;
        let infeas = -tab.obj[width];
        let bscale = 1.0 + rows.iter().fold(0.0f64, |acc, r| acc.max(r.rhs.abs()));
        if infeas > TAU_FEAS * bscale {
            return Ok(LpSolution::with_status(LpStatus::Infeasible, n));
        }
        // Drive remaining artificials out of the basis.
        let mut r = 0;
        while r < tab.rows {
            if is_art[tab.basis[r]] {
                let mut best: Option<usize> = None;
                let mut best_abs = 1e-9;
                for c in 0..width {
                    if !is_art[c] && tab.at(r, c).abs() > best_abs {
                        best_abs = tab.at(r, c).abs();
                        best = Some(c);
                    }
                }
                match best {
                    Some(c) => {
                        tab.pivot(r, c);
                        r += 1;
                    }
                    None => tab.remove_row(r),
                }
            } else {
                r += 1;
            }
        }
    }

    // Phase 2.
    let cmax = problem.cost.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cscale = if cmax > 0.0 { 1.0 / cmax } else { 1.0 };
    let mut cost_std = vec![0.0; width];
    for (j, &(p, neg)) in var_cols.iter().enumerate() {
        cost_std[p] = problem.cost[j] * cscale;
        if let Some(q) = neg {
            cost_std[q] = -problem.cost[j] * cscale;
        }
    }
    tab.obj = vec![0.0; stride];
    tab.obj[..width].copy_from_slice(&cost_std);
    for r in 0..tab.rows {
        let cb = cost_std[tab.basis[r]];
        if cb != 0.0 {
            let base = r * stride;
            for c in 0..stride {
                tab.obj[c] -= cb * tab.data[base + c];
            }
        }
    }
    let allowed: Vec<bool> = is_art.iter().map(|a| !a).collect();
    if !tab.optimize(&allowed)? {
        return Ok(LpSolution::with_status(LpStatus::Unbounded, n));
    }

    // Standard-form values from the tableau, then refined by re-solving the
    // basis system against the unscaled-by-pivoting row data.
    let mut values = vec![0.0; width];
    for r in 0..tab.rows {
        values[tab.basis[r]] = tab.rhs(r).max(0.0);
    }
    if let Some(refined) = refine_basis(&tab, &rows_as_std(&rows, &var_cols, n_struct, width), width) {
        values = refined;
    }

    let mut x = DVector::zeros(n);
    for (j, &(p, neg)) in var_cols.iter().enumerate() {
        x[j] = values[p] - neg.map_or(0.0, |q| values[q]);
    }
    let objective = problem.cost.dot(&x);
    Ok(LpSolution { status: LpStatus::Optimal, point: x, objective })
}

/// Standard-form rows (before sign normalisation) used for basis refinement.
fn rows_as_std(
    rows: &[Row],
    var_cols: &[(usize, Option<usize>)],
    n_struct: usize,
    width: usize,
) -> Vec<(Vec<f64>, f64)> {
    let mut out = Vec::with_capacity(rows.len());
    let mut slack_idx = n_struct;
    for row in rows {
        let mut coef = vec![0.0; width];
        for (j, &(p, neg)) in var_cols.iter().enumerate() {
            coef[p] = row.coef[j];
            if let Some(q) = neg {
                coef[q] = -row.coef[j];
            }
        }
        if row.ub {
            coef[slack_idx] = 1.0;
            slack_idx += 1;
        }
        out.push((coef, row.rhs));
    }
    out
}

fn refine_basis(tab: &Tableau, std_rows: &[(Vec<f64>, f64)], width: usize) -> Option<Vec<f64>> {
    // Only refine when the basis is square over the full row set (no rows were
    // dropped as redundant) and contains no artificial columns.
    let m = std_rows.len();
    if tab.rows != m || m == 0 {
        return None;
    }
    let basis = &tab.basis;
    if basis.iter().any(|&b| b >= width) {
        return None;
    }
    let mut mat = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for (r, (coef, b)) in std_rows.iter().enumerate() {
        for (k, &bc) in basis.iter().enumerate() {
            if bc >= coef.len() {
                return None;
            }
            mat[(r, k)] = coef[bc];
        }
        rhs[r] = *b;
    }
    let sol = mat.lu().solve(&rhs)?;
    let mut values = vec![0.0; width];
    for (k, &bc) in basis.iter().enumerate() {
        let v = sol[k];
        if !v.is_finite() {
            return None;
        }
        // Refinement must agree with the tableau; otherwise the basis matrix
        // is too ill-conditioned to trust.
        if (v - tab.rhs(k)).abs() > 1e-6 * (1.0 + v.abs()) {
            return None;
        }
        values[bc] = v.max(0.0);
    }
    Some(values)
}
