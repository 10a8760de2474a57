use nalgebra::{DMatrix, DVector};

use super::HPolytope;
use crate::error::{Error, Result};
use crate::solver::{solve_lp, LpProblem, LpStatus};

const EMPTY_TOL: f64 = 1e-9;

impl HPolytope {
    /// `max ⟨dir, x⟩` over the polytope.
    ///
    /// Solved through the dual `min hᵀy, Hᵀy = dir, y >= 0`, which has only
    /// `n` equality rows and is also the per-row Farkas certificate used for
    /// containment.
    pub fn support(&self, dir: &DVector<f64>) -> Result<f64> {
        if dir.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "direction has length {}, polytope dimension {}",
                dir.len(),
                self.dim()
            )));
        }
        if self.is_trivially_empty() {
            return Err(Error::EmptySet);
        }
        if dir.amax() == 0.0 {
            return if self.is_empty()? { Err(Error::EmptySet) } else { Ok(0.0) };
        }
        let q = self.num_rows();
        let lp = LpProblem::new(q)
            .minimize(self.h_vec().clone())
            .subject_to_eq(self.h_mat().transpose(), dir.clone())
            .nonnegative(vec![true; q]);
        let sol = solve_lp(&lp)?;
        match sol.status {
            LpStatus::Optimal => Ok(sol.objective),
            LpStatus::Unbounded => Err(Error::EmptySet),
            LpStatus::Infeasible => {
                if self.is_empty()? {
                    Err(Error::EmptySet)
                } else {
                    Err(Error::Unbounded)
                }
            }
        }
    }

    /// Chebyshev ball (center, radius) with the radius capped at 1, or `None`
    /// when the polytope is empty. A radius near zero means the set is not
    /// full-dimensional.
    pub fn chebyshev(&self) -> Result<Option<(DVector<f64>, f64)>> {
        let (q, n) = (self.num_rows(), self.dim());
        let mut a = DMatrix::zeros(q + 1, n + 1);
        let mut b = DVector::zeros(q + 1);
        for i in 0..q {
            for j in 0..n {
                a[(i, j)] = self.h_mat()[(i, j)];
            }
            a[(i, n)] = self.h_mat().row(i).norm();
            b[i] = self.h_vec()[i];
        }
        a[(q, n)] = 1.0;
        b[q] = 1.0;
        let mut cost = DVector::zeros(n + 1);
        cost[n] = -1.0;
        let sol = solve_lp(&LpProblem::new(n + 1).minimize(cost).subject_to_ub(a, b))?;
        match sol.status {
            LpStatus::Optimal => {
                let t = sol.point[n];
                if t < -EMPTY_TOL {
                    Ok(None)
                } else {
                    Ok(Some((sol.point.rows(0, n).into_owned(), t.max(0.0))))
                }
            }
            _ => Ok(None),
        }
    }

    pub fn is_empty(&self) -> Result<bool> {
        if self.is_trivially_empty() {
            return Ok(true);
        }
        Ok(self.chebyshev()?.is_none())
    }

    pub fn is_bounded(&self) -> Result<bool> {
        if self.is_empty()? {
            return Ok(true);
        }
        for i in 0..self.dim() {
            for s in [1.0, -1.0] {
                let mut d = DVector::zeros(self.dim());
                d[i] = s;
                match self.support(&d) {
                    Ok(_) => {}
                    Err(Error::Unbounded) => return Ok(false),
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(true)
    }

    /// Whether `inner ⊆ self`, each row checked after normalisation with slack
    /// `tol·max(1, |h_i|)`.
    pub fn contains(&self, inner: &HPolytope, tol: f64) -> Result<bool> {
        if self.dim() != inner.dim() {
            return Err(Error::DimensionMismatch("containment between different dimensions".into()));
        }
        if inner.is_empty()? {
            return Ok(true);
        }
        for i in 0..self.num_rows() {
            let row = self.h_mat().row(i).transpose();
            let nrm = row.norm();
            if nrm <= 1e-14 {
                if self.h_vec()[i] < 0.0 {
                    return Ok(false);
                }
                continue;
            }
            let s = match inner.support(&row) {
                Ok(s) => s,
                Err(Error::Unbounded) => return Ok(false),
                Err(e) => return Err(e),
            };
            let rhs = self.h_vec()[i] / nrm;
            if s / nrm > rhs + tol * rhs.abs().max(1.0) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Mutual containment within `tol`.
    pub fn set_equal(&self, other: &HPolytope, tol: f64) -> Result<bool> {
        Ok(self.contains(other, tol)? && other.contains(self, tol)?)
    }

    /// Largest `ε` with `center + ε·B(n) ⊆ P`, from the rowwise absolute-sum
    /// encoding `H·center + ε·Σ_j |H_ij| <= h`. The flag is false when the
    /// center lies outside `P`, in which case `ε` is reported as 0.
    pub fn max_inscribed_ball_at(&self, center: &DVector<f64>) -> Result<(f64, bool)> {
        if center.len() != self.dim() {
            return Err(Error::DimensionMismatch("center length differs from dimension".into()));
        }
        let slack = self.h_vec() - self.h_mat() * center;
        let mut eps = f64::INFINITY;
        for i in 0..self.num_rows() {
            let l1: f64 = self.h_mat().row(i).iter().map(|v| v.abs()).sum();
            if l1 <= 1e-14 {
                if slack[i] < 0.0 {
                    return Ok((0.0, false));
                }
                continue;
            }
            eps = eps.min(slack[i] / l1);
        }
        if eps < 0.0 {
            return Ok((0.0, false));
        }
        Ok((eps, true))
    }
}

/// Minimal `r >= 0` with `P1 ⊆ r·P2`.
///
/// The Farkas system `Λ >= 0, ΛH₁ = H₂, Λh₁ <= r·h₂` separates over the rows
/// of `H₂`: row `j` needs `min {λᵀh₁ : λ >= 0, λᵀH₁ = H₂ⱼ}`, which is the
/// support of `P1` along `H₂ⱼ`. The optimum is the largest ratio of that value
/// to `h₂ⱼ`.
pub fn containment_ratio(p1: &HPolytope, p2: &HPolytope) -> Result<f64> {
    if p1.dim() != p2.dim() {
        return Err(Error::DimensionMismatch("containment ratio between different dimensions".into()));
    }
    p2.check_normal_form()?;
    if p1.is_empty()? {
        return Ok(0.0);
    }
    let mut r = 0.0f64;
    for j in 0..p2.num_rows() {
        let row = p2.h_mat().row(j).transpose();
        if row.amax() <= 1e-14 {
            continue;
        }
        let s = p1.support(&row)?;
        r = r.max(s / p2.h_vec()[j]);
    }
    Ok(r)
}

/// Upper bound on the minimal `r` with `P1 ⊆ r·Proj_n(P2)` that avoids
/// computing the projection.
///
/// Searches for `Γ = [I; G]`, `β = [0; β']` and `Λ >= 0` with `ΛH₁ = H₂Γ` and
/// `Λh₁ <= r·h₂ + H₂β`; any feasible point maps `x ∈ P1` to `Γx − β ∈ r·P2`
/// with first block `x`. Returns `None` when no such certificate exists.
pub fn containment_ratio_projected(p1: &HPolytope, p2: &HPolytope) -> Result<Option<f64>> {
    let n = p1.dim();
    if p2.dim() < n {
        return Err(Error::DimensionMismatch(format!(
            "lifted set has dimension {} < {}",
            p2.dim(),
            n
        )));
    }
    p2.check_normal_form()?;
    if p1.is_empty()? {
        return Ok(Some(0.0));
    }
    let p1 = p1.remove_redundancy()?;
    let p2 = p2.remove_redundancy()?;
    p2.check_normal_form()?;
    let k = p2.dim() - n;
    let (q1, q2) = (p1.num_rows(), p2.num_rows());
    let h1 = p1.h_mat();
    let h2 = p2.h_mat();
    let h2x = h2.columns(0, n);
    let h2d = h2.columns(n, k);

    // variable layout: r | G (k×n, row-major) | β' (k) | Λ (q2×q1, row-major)
    let idx_g = |a: usize, c: usize| 1 + a * n + c;
    let idx_beta = |a: usize| 1 + k * n + a;
    let idx_lam = |i: usize, j: usize| 1 + k * n + k + i * q1 + j;
    let nv = 1 + k * n + k + q2 * q1;

    let mut a_eq = DMatrix::zeros(q2 * n, nv);
    let mut b_eq = DVector::zeros(q2 * n);
    for i in 0..q2 {
        for c in 0..n {
            let row = i * n + c;
            for j in 0..q1 {
                a_eq[(row, idx_lam(i, j))] = h1[(j, c)];
            }
            for a in 0..k {
                a_eq[(row, idx_g(a, c))] = -h2d[(i, a)];
            }
            b_eq[row] = h2x[(i, c)];
        }
    }
    let mut a_ub = DMatrix::zeros(q2, nv);
    let b_ub = DVector::zeros(q2);
    for i in 0..q2 {
        for j in 0..q1 {
            a_ub[(i, idx_lam(i, j))] = p1.h_vec()[j];
        }
        a_ub[(i, 0)] = -p2.h_vec()[i];
        for a in 0..k {
            a_ub[(i, idx_beta(a))] = -h2d[(i, a)];
        }
    }
    let mut nonneg = vec![false; nv];
    nonneg[0] = true;
    for flag in nonneg.iter_mut().skip(1 + k * n + k) {
        *flag = true;
    }
    let mut cost = DVector::zeros(nv);
    cost[0] = 1.0;
    let lp = LpProblem::new(nv)
        .minimize(cost)
        .subject_to_ub(a_ub, b_ub)
        .subject_to_eq(a_eq, b_eq)
        .nonnegative(nonneg);
    let sol = solve_lp(&lp)?;
    Ok(match sol.status {
        LpStatus::Optimal => Some(sol.objective.max(0.0)),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::TAU_SET;

    fn diamond() -> HPolytope {
        HPolytope::from_rows(
            &[vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]],
            &[1.0, 1.0, 1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn support_examples() {
        let b = HPolytope::unit_box(2);
        assert!((b.support(&DVector::from_vec(vec![1.0, 1.0])).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(b.support(&DVector::zeros(2)).unwrap(), 0.0);
        assert!((diamond().support(&DVector::from_vec(vec![1.0, 0.0])).unwrap() - 1.0).abs() < 1e-12);
        let half = HPolytope::from_rows(&[vec![1.0, 0.0]], &[1.0]).unwrap();
        assert_eq!(half.support(&DVector::from_vec(vec![0.0, 1.0])).unwrap_err(), Error::Unbounded);
        assert_eq!(
            HPolytope::empty(2).support(&DVector::from_vec(vec![0.0, 1.0])).unwrap_err(),
            Error::EmptySet
        );
    }

    #[test]
    fn ratio_examples() {
        let b = HPolytope::unit_box(2);
        assert!((containment_ratio(&b, &b).unwrap() - 1.0).abs() < 1e-12);
        let big = HPolytope::symmetric_box(2, 2.0);
        assert!((containment_ratio(&big, &b).unwrap() - 2.0).abs() < 1e-12);
        assert!((containment_ratio(&diamond(), &b).unwrap() - 1.0).abs() < 1e-12);
        let off = HPolytope::interval(0.0, 1.0);
        assert!(matches!(containment_ratio(&HPolytope::interval(-1.0, 1.0), &off), Err(Error::NormalForm { .. })));
    }

    #[test]
    fn projected_ratio_on_product_is_one() {
        let p = diamond();
        let lifted = p.cartesian_product(&HPolytope::interval(-0.3, 0.3));
        let r = containment_ratio_projected(&p, &lifted).unwrap().unwrap();
        assert!((r - 1.0).abs() < 1e-9);
    }

    #[test]
    fn projected_ratio_is_conservative() {
        // slanted lift of the unit interval
        let p2 = HPolytope::from_rows(
            &[vec![1.0, 1.0], vec![-1.0, -1.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            &[1.0, 1.0, 0.5, 0.5],
        )
        .unwrap();
        let p1 = HPolytope::interval(-2.0, 2.0);
        let exact = containment_ratio(&p1, &p2.project(1).unwrap()).unwrap();
        let enc = containment_ratio_projected(&p1, &p2).unwrap().unwrap();
        assert!(exact > 1.0);
        assert!(enc >= exact - 1e-9);
    }

    #[test]
    fn inscribed_ball_examples() {
        let b = HPolytope::unit_box(2);
        assert_eq!(b.max_inscribed_ball_at(&DVector::zeros(2)).unwrap(), (1.0, true));
        let (e, _) = b.max_inscribed_ball_at(&DVector::from_vec(vec![0.5, 0.0])).unwrap();
        assert!((e - 0.5).abs() < 1e-12);
        let (e, _) = diamond().max_inscribed_ball_at(&DVector::zeros(2)).unwrap();
        assert!((e - 0.5).abs() < 1e-12);
        assert_eq!(b.max_inscribed_ball_at(&DVector::from_vec(vec![3.0, 0.0])).unwrap(), (0.0, false));
    }

    #[test]
    fn equality_and_emptiness() {
        assert!(HPolytope::unit_box(2).set_equal(&HPolytope::unit_box(2), TAU_SET).unwrap());
        assert!(!HPolytope::unit_box(2).set_equal(&diamond(), TAU_SET).unwrap());
        assert!(HPolytope::empty(3).is_empty().unwrap());
        assert!(!HPolytope::origin(2).is_empty().unwrap());
        assert!(HPolytope::unit_box(2).is_bounded().unwrap());
        assert!(!HPolytope::from_rows(&[vec![1.0, 0.0]], &[1.0]).unwrap().is_bounded().unwrap());
    }
}
