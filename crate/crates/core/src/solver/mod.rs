//! Numeric kernel: LP, QP, Riccati/Lyapunov and small eigenvalue routines.

pub mod linalg;
pub mod lp;
pub mod qp;

pub use linalg::{
    cholesky, controllability_rank, dare_gain, dare_residual, solve_dare, solve_discrete_lyapunov,
    spectral_radius,
};
pub use lp::{solve_lp, LpProblem, LpSolution, LpStatus, TAU_FEAS, TAU_OBJ};
pub use qp::{solve_qp, QpProblem, QpSolution, QpStatus};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::polytope::HPolytope;

/// Closest point of `p` to `point` and the Euclidean distance to it.
pub fn project_point(point: &DVector<f64>, p: &HPolytope) -> Result<(DVector<f64>, f64)> {
    if point.len() != p.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point has length {}, polytope dimension {}",
            point.len(),
            p.dim()
        )));
    }
    match qp::project_onto(p.h_mat(), p.h_vec(), point)? {
        Some(c) => {
            let d = (point - &c).norm();
            Ok((c, d))
        }
        None => Err(Error::EmptySet),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn lp1(cost: &[f64], a: &[f64], b: &[f64]) -> LpProblem {
        let n = cost.len();
        LpProblem::new(n)
            .minimize(DVector::from_row_slice(cost))
            .subject_to_ub(DMatrix::from_row_slice(b.len(), n, a), DVector::from_row_slice(b))
    }

    #[test]
    fn lp_single_active_bound() {
        let s = solve_lp(&lp1(&[1.0], &[-1.0], &[-1.0])).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.point[0] - 1.0).abs() < 1e-12);
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lp_contradictory_bounds() {
        let s = solve_lp(&lp1(&[0.0], &[1.0, -1.0], &[-1.0, -1.0])).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn lp_box_corner() {
        let s = solve_lp(&lp1(
            &[-1.0, -1.0],
            &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0],
            &[1.0, 0.0, 1.0, 0.0],
        ))
        .unwrap();
        // oracle: enumerate the four vertices
        let best = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
            .iter()
            .map(|(x, y)| -(x + y))
            .fold(f64::INFINITY, f64::min);
        assert!((s.objective - best).abs() < 1e-9);
        assert!((s.point[0] - 1.0).abs() < 1e-9 && (s.point[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lp_unbounded() {
        let s = solve_lp(&lp1(&[-1.0], &[-1.0], &[0.0])).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn lp_equalities_and_signs() {
        // min x + 2y s.t. x + y = 3, x - y <= 1, x,y >= 0 → x = 2, y = 1
        let lp = LpProblem::new(2)
            .minimize(DVector::from_vec(vec![-1.0, -2.0]))
            .subject_to_ub(DMatrix::from_row_slice(1, 2, &[1.0, -1.0]), DVector::from_vec(vec![1.0]))
            .subject_to_eq(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![3.0]))
            .nonnegative(vec![true, true]);
        let s = solve_lp(&lp).unwrap();
        assert!((s.point[0]).abs() < 1e-9 && (s.point[1] - 3.0).abs() < 1e-9);
        assert!((s.objective + 6.0).abs() < 1e-9);
    }

    #[test]
    fn lp_dimension_mismatch() {
        let lp = LpProblem::new(2).subject_to_ub(DMatrix::zeros(1, 3), DVector::zeros(1));
        assert!(matches!(solve_lp(&lp), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn project_point_examples() {
        let seg = HPolytope::interval(1.0, 2.0);
        let (c, d) = project_point(&DVector::from_vec(vec![0.0]), &seg).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-10 && (d - 1.0).abs() < 1e-10);
        let (_, d) = project_point(&DVector::from_vec(vec![1.5]), &seg).unwrap();
        assert_eq!(d, 0.0);
        let bx = HPolytope::unit_box(2);
        let (c, d) = project_point(&DVector::from_vec(vec![1.5, 1.5]), &bx).unwrap();
        assert!((c - DVector::from_vec(vec![1.0, 1.0])).amax() < 1e-10);
        assert!((d - 0.5f64.sqrt()).abs() < 1e-10);
        assert_eq!(project_point(&DVector::zeros(1), &HPolytope::empty(1)).unwrap_err(), Error::EmptySet);
    }
}
