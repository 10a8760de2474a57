//! Primal active-set method for strictly convex quadratic programs.

use nalgebra::{DMatrix, DVector};

use super::linalg::solve_robust;
use super::lp::{solve_lp, LpProblem, LpStatus, TAU_FEAS};
use crate::error::{Error, Result};

const QP_MAX_ITER: usize = 5_000;
const STEP_TOL: f64 = 1e-11;
const MULT_TOL: f64 = 1e-10;

/// `min ½ zᵀGz + cᵀz` subject to `a_ub z <= b_ub`, `a_eq z = b_eq`.
/// `G` must be symmetric positive definite.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub g: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub status: QpStatus,
    pub point: DVector<f64>,
    pub objective: f64,
    /// Inequality rows in the final working set.
    pub active: Vec<usize>,
}

impl QpProblem {
    fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.g * z)) + self.c.dot(z)
    }

    fn validate(&self) -> Result<()> {
        let n = self.c.len();
        if self.g.shape() != (n, n)
            || self.a_ub.ncols() != n
            || self.a_eq.ncols() != n
            || self.a_ub.nrows() != self.b_ub.len()
            || self.a_eq.nrows() != self.b_eq.len()
        {
            return Err(Error::DimensionMismatch("inconsistent QP dimensions".into()));
        }
        Ok(())
    }

    fn feasible(&self, z: &DVector<f64>) -> bool {
        let ub_ok = (&self.a_ub * z - &self.b_ub).iter().all(|&v| v <= TAU_FEAS * 10.0);
        let eq_ok = (&self.a_eq * z - &self.b_eq).iter().all(|&v| v.abs() <= TAU_FEAS * 10.0);
        ub_ok && eq_ok
    }
}

/// Solves a strictly convex QP. `warm_start`, if feasible, is used as the
/// initial iterate; otherwise a feasible point is found by linear programming.
pub fn solve_qp(problem: &QpProblem, warm_start: Option<&DVector<f64>>) -> Result<QpSolution> {
    problem.validate()?;
    let n = problem.c.len();
    let mut x = match warm_start.filter(|w| w.len() == n && problem.feasible(w)) {
        Some(w) => w.clone(),
        None => {
            let lp = LpProblem::new(n)
                .subject_to_ub(problem.a_ub.clone(), problem.b_ub.clone())
                .subject_to_eq(problem.a_eq.clone(), problem.b_eq.clone());
            let sol = solve_lp(&lp)?;
            match sol.status {
                LpStatus::Optimal => sol.point,
                _ => {
                    return Ok(QpSolution {
                        status: QpStatus::Infeasible,
                        point: DVector::zeros(n),
                        objective: f64::INFINITY,
                        active: Vec::new(),
                    })
                }
            }
        }
    };

    let n_eq = problem.a_eq.nrows();
    let mut working: Vec<usize> = Vec::new();
    for _ in 0..QP_MAX_ITER {
        let k = n_eq + working.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&problem.g);
        for i in 0..n_eq {
            for j in 0..n {
                kkt[(n + i, j)] = problem.a_eq[(i, j)];
                kkt[(j, n + i)] = problem.a_eq[(i, j)];
            }
        }
        for (w, &row) in working.iter().enumerate() {
            for j in 0..n {
                kkt[(n + n_eq + w, j)] = problem.a_ub[(row, j)];
                kkt[(j, n + n_eq + w)] = problem.a_ub[(row, j)];
            }
        }
        let grad = &problem.g * &x + &problem.c;
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&grad));
        let sol = solve_robust(&kkt, &rhs)
            .ok_or_else(|| Error::Numerical("QP KKT system could not be solved".into()))?;
        let step = sol.rows(0, n).into_owned();
        let mults = sol.rows(n, k).into_owned();

        if step.amax() <= STEP_TOL * (1.0 + x.amax()) {
            // Stationary on the working set: check inequality multipliers.
            let mut worst: Option<(usize, f64)> = None;
            for w in 0..working.len() {
                let mu = mults[n_eq + w];
                if mu < -MULT_TOL && worst.is_none_or(|(_, v)| mu < v) {
                    worst = Some((w, mu));
                }
            }
            match worst {
                None => {
                    let objective = problem.objective(&x);
                    return Ok(QpSolution { status: QpStatus::Optimal, point: x, objective, active: working });
                }
                Some((w, _)) => {
                    working.remove(w);
                    continue;
                }
            }
        }

        // Ratio test against inequality rows outside the working set.
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..problem.a_ub.nrows() {
            if working.contains(&i) {
                continue;
            }
            let ai = problem.a_ub.row(i);
            let slope = (ai * &step)[0];
            if slope > 1e-14 {
                let slack = (problem.b_ub[i] - (ai * &x)[0]).max(0.0);
                let t = slack / slope;
                if t < alpha {
                    alpha = t;
                    blocking = Some(i);
                }
            }
        }
        x += &step * alpha;
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    Err(Error::Numerical("active-set QP iteration limit reached".into()))
}

/// Euclidean projection of `v` onto `{z : Hz <= h}`.
pub fn project_onto(h_mat: &DMatrix<f64>, h_vec: &DVector<f64>, v: &DVector<f64>) -> Result<Option<DVector<f64>>> {
    let n = v.len();
    if (h_mat * v - h_vec).iter().all(|&s| s <= 0.0) {
        return Ok(Some(v.clone()));
    }
    let qp = QpProblem {
        g: DMatrix::identity(n, n),
        c: -v,
        a_ub: h_mat.clone(),
        b_ub: h_vec.clone(),
        a_eq: DMatrix::zeros(0, n),
        b_eq: DVector::zeros(0),
    };
    let sol = solve_qp(&qp, None)?;
    Ok(match sol.status {
        QpStatus::Optimal => Some(sol.point),
        QpStatus::Infeasible => None,
    })
}
