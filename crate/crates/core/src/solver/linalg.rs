//! Riccati, Lyapunov and eigenvalue routines on small dense matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative residual stop for the Riccati iteration.
pub const TAU_DARE: f64 = 1e-10;
const DARE_MAX_ITER: usize = 10_000;
const SYM_TOL: f64 = 1e-9;

fn check_square(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    assert_eq!(a.nrows(), a.ncols(), "spectral_radius needs a square matrix");
    if a.nrows() == 1 {
        return a[(0, 0)].abs();
    }
    match nalgebra::linalg::Schur::try_new(a.clone(), 1e-14, 10_000) {
        Some(s) => s.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        // Schur failed to converge: fall back to a Gelfand estimate.
        None => {
            let mut p = a.clone();
            let k = 64;
            for _ in 1..k {
                p = &p * a;
                let s = p.norm();
                if s > 0.0 {
                    p /= s;
                }
            }
            (a.norm_squared().sqrt()).min((&p * a).norm() / p.norm().max(f64::MIN_POSITIVE))
        }
    }
}

/// Lower-triangular `L` with `L Lᵀ = Q`.
pub fn cholesky(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(q, "cholesky input")?;
    let scale = q.amax().max(1.0);
    if (q - q.transpose()).amax() > SYM_TOL * scale {
        return Err(Error::InvalidInput("cholesky input is not symmetric".into()));
    }
    let sym = symmetrize(q);
    nalgebra::linalg::Cholesky::new(sym).map(|c| c.l()).ok_or(Error::NotPositiveDefinite)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    symmetrize(m).symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

fn solve_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(x) = a.clone().lu().solve(b) {
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    None
}

/// Solves `Aᵀ X A − X = −Q` by vectorisation.
pub fn solve_discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(a, "A")?;
    check_square(q, "Q")?;
    let n = a.nrows();
    if q.nrows() != n {
        return Err(Error::DimensionMismatch("Lyapunov A and Q differ in size".into()));
    }
    let at = a.transpose();
    let k = at.kronecker(&at) - DMatrix::identity(n * n, n * n);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let x = k
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Numerical("Lyapunov operator is singular".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, x.as_slice())))
}

/// Residual of the discrete algebraic Riccati equation at `P`.
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let btp = b.transpose() * p;
    let s = r + &btp * b;
    let inner = match solve_mat(&s, &(&btp * a)) {
        Some(m) => m,
        None => return f64::INFINITY,
    };
    let res = a.transpose() * p * a - p + q - a.transpose() * p * b * inner;
    res.amax()
}

/// Optimal state-feedback gain `K = −(R + BᵀPB)⁻¹ BᵀPA`, so that `u = Kx`.
pub fn dare_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let btp = b.transpose() * p;
    let s = r + &btp * b;
    solve_mat(&s, &(&btp * a))
        .map(|k| -k)
        .ok_or_else(|| Error::Numerical("R + BᵀPB is singular".into()))
}

/// Stabilizing solution of `P = AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q`.
///
/// Uses the structured doubling algorithm and falls back to the plain Riccati
/// recursion. The returned `P` is checked for residual, definiteness and
/// closed-loop stability; a pair that cannot be stabilized is reported as
/// [`Error::NotStabilizable`].
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_square(a, "A")?;
    let n = a.nrows();
    let m = b.ncols();
    if b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::DimensionMismatch(format!(
            "DARE shapes: A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    if min_eigenvalue_sym(r) <= 0.0 {
        return Err(Error::NotPositiveDefinite);
    }

    let candidate = sda(a, b, q, r).or_else(|| riccati_recursion(a, b, q, r));
    let p = candidate.ok_or(Error::NotStabilizable)?;
    let scale = 1.0 + p.amax().max(q.amax());
    if dare_residual(a, b, q, r, &p) > 1e-7 * scale {
        return Err(Error::NotStabilizable);
    }
    let k = dare_gain(a, b, r, &p)?;
    if spectral_radius(&(a + b * k)) >= 1.0 - 1e-12 {
        return Err(Error::NotStabilizable);
    }
    Ok(p)
}

fn sda(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let r_inv_bt = solve_mat(r, &b.transpose())?;
    let mut ak = a.clone();
    let mut gk = symmetrize(&(b * r_inv_bt));
    let mut hk = symmetrize(q);
    for _ in 0..200 {
        let w = &id + &gk * &hk;
        let w_inv_a = solve_mat(&w, &ak)?;
        let w_inv_g = solve_mat(&w, &gk)?;
        let a_next = &ak * &w_inv_a;
        let g_next = symmetrize(&(&gk + &ak * w_inv_g * ak.transpose()));
        let h_next = symmetrize(&(&hk + ak.transpose() * &hk * &w_inv_a));
        let diff = (&h_next - &hk).amax();
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if !hk.iter().all(|v| v.is_finite()) || hk.amax() > 1e15 {
            return None;
        }
        if diff <= TAU_DARE * (1.0 + hk.amax()) {
            return Some(hk);
        }
    }
    None
}

fn riccati_recursion(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let mut p = symmetrize(q);
    for _ in 0..DARE_MAX_ITER {
        let btp = b.transpose() * &p;
        let s = r + &btp * b;
        let inner = solve_mat(&s, &(&btp * a))?;
        let next = symmetrize(&(a.transpose() * &p * a - a.transpose() * &p * b * inner + q));
        let diff = (&next - &p).amax();
        p = next;
        if !p.iter().all(|v| v.is_finite()) || p.amax() > 1e15 {
            return None;
        }
        if diff <= TAU_DARE * (1.0 + p.amax()) {
            return Some(p);
        }
    }
    None
}

/// Rank of `[B, AB, …, Aⁿ⁻¹B]`.
pub fn controllability_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let m = b.ncols();
    if n == 0 {
        return 0;
    }
    let mut ctrb = DMatrix::zeros(n, n * m);
    let mut blk = b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * m), (n, m)).copy_from(&blk);
        blk = a * blk;
    }
    numerical_rank(&ctrb)
}

pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let tol = smax * (m.nrows().max(m.ncols()) as f64) * 1e-10;
    sv.iter().filter(|&&s| s > tol.max(1e-13)).count()
}

/// Least-squares / minimum-norm solve used when a square system may be singular.
pub fn solve_robust(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if a.is_square() {
        if let Some(x) = a.clone().lu().solve(b) {
            if x.iter().all(|v| v.is_finite()) && (a * &x - b).amax() <= 1e-9 * (1.0 + b.amax()) {
                return Some(x);
            }
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    svd.solve(b, smax * 1e-12).ok().filter(|x| x.iter().all(|v| v.is_finite()))
}
