//! Contractive ellipsoids `E(c) = {x : xᵀQ⁻¹x <= c²}` of the collaborative
//! system and the contraction parameters derived from them.
//!
//! The smallest contraction rate is searched by bisection on a target rate
//! `ρ`. At each `ρ` the scaled pair `(A/ρ, [B E]/ρ)` is handed to a Riccati
//! solve with identity weights; a stabilizing solution gives a gain whose
//! closed loop has spectral radius below `ρ`. The shape matrix is then taken
//! from a discrete Lyapunov equation with a small margin. The result is a
//! valid, though not necessarily minimal, contraction rate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::{HPolytope, RadiusMode, VERTEX_DIM_LIMIT};
use crate::solver::linalg::min_eigenvalue_sym;
use crate::solver::{cholesky, dare_gain, solve_dare, solve_discrete_lyapunov, spectral_radius};
use crate::systems::DeterministicSystem;

pub const BISECTION_FLOOR: f64 = 1e-3;
pub const BISECTION_ITERS: usize = 40;
const LYAP_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractiveEllipsoid {
    #[serde(rename = "Q", with = "crate::serde_mat")]
    pub q: DMatrix<f64>,
    #[serde(rename = "R1", with = "crate::serde_mat")]
    pub r1: DMatrix<f64>,
    #[serde(rename = "R2", with = "crate::serde_mat")]
    pub r2: DMatrix<f64>,
    pub lambda_a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem6Params {
    pub gamma: f64,
    #[serde(rename = "N")]
    pub n_steps: usize,
    pub lambda: f64,
    pub c0: f64,
    pub c_out: f64,
}

impl ContractiveEllipsoid {
    /// `Q⁻¹`.
    pub fn q_inv(&self) -> Result<DMatrix<f64>> {
        let l = cholesky(&self.q)?;
        let l_inv = l.try_inverse().ok_or(Error::NotPositiveDefinite)?;
        Ok(l_inv.transpose() * l_inv)
    }

    /// Closed-loop gain `[R1; R2]·Q⁻¹`.
    pub fn gain(&self) -> Result<DMatrix<f64>> {
        let qi = self.q_inv()?;
        let n = self.q.nrows();
        let (m, l) = (self.r1.nrows(), self.r2.nrows());
        let mut k = DMatrix::zeros(m + l, n);
        k.view_mut((0, 0), (m, n)).copy_from(&(&self.r1 * &qi));
        k.view_mut((m, 0), (l, n)).copy_from(&(&self.r2 * &qi));
        Ok(k)
    }

    pub fn closed_loop(&self, co: &DeterministicSystem) -> Result<DMatrix<f64>> {
        Ok(&co.a + &co.b * self.gain()?)
    }

    /// Smallest eigenvalue of `λ_a²Q⁻¹ − A_cᵀQ⁻¹A_c`; nonnegative for a valid
    /// certificate.
    pub fn certificate_margin(&self, co: &DeterministicSystem) -> Result<f64> {
        let ac = self.closed_loop(co)?;
        let qi = self.q_inv()?;
        let m = &qi * self.lambda_a.powi(2) - ac.transpose() * &qi * &ac;
        Ok(min_eigenvalue_sym(&m))
    }
}

fn gain_for_rate(a: &DMatrix<f64>, b: &DMatrix<f64>, rho: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let m = b.ncols();
    let a_s = a / rho;
    let b_s = b / rho;
    let k = if m == 0 {
        DMatrix::zeros(0, n)
    } else {
        let p = solve_dare(&a_s, &b_s, &DMatrix::identity(n, n), &DMatrix::identity(m, m)).ok()?;
        dare_gain(&a_s, &b_s, &DMatrix::identity(m, m), &p).ok()?
    };
    (spectral_radius(&(a + b * &k)) < rho).then_some(k)
}

/// Contractive ellipsoid of `co`; the first `m` input columns belong to the
/// plant input (`R1`), the rest to the collaborative disturbance input (`R2`).
pub fn find_contractive_ellipsoid(co: &DeterministicSystem, m: usize) -> Result<ContractiveEllipsoid> {
    let n = co.a.nrows();
    let total = co.b.ncols();
    if m > total {
        return Err(Error::DimensionMismatch(format!("input split {m} exceeds {total} inputs")));
    }
    let (rho, k) = match gain_for_rate(&co.a, &co.b, BISECTION_FLOOR) {
        Some(k) => (BISECTION_FLOOR, k),
        None => {
            let mut hi = 1.0 - 1e-9;
            let mut k_hi = gain_for_rate(&co.a, &co.b, hi).ok_or(Error::NotStabilizable)?;
            let mut lo = BISECTION_FLOOR;
            for _ in 0..BISECTION_ITERS {
                let mid = 0.5 * (lo + hi);
                match gain_for_rate(&co.a, &co.b, mid) {
                    Some(k) => {
                        hi = mid;
                        k_hi = k;
                    }
                    None => lo = mid,
                }
            }
            (hi, k_hi)
        }
    };
    let ac = &co.a + &co.b * &k;
    let mu = LYAP_MARGIN.min(((1.0 / rho).powi(2) - 1.0) * 0.5);
    let s = rho * (1.0 + mu).sqrt();
    // (A_c/s)ᵀ P (A_c/s) − P = −I/s²  ⇔  A_cᵀPA_c − s²P = −I
    let p = solve_discrete_lyapunov(&(&ac / s), &(DMatrix::identity(n, n) / (s * s)))?;
    let l = cholesky(&p)?;
    let l_inv = l.try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let q = crate::solver::linalg::symmetrize(&(l_inv.transpose() * l_inv));
    let r = &k * &q;
    Ok(ContractiveEllipsoid {
        q,
        r1: r.rows(0, m).into_owned(),
        r2: r.rows(m, total - m).into_owned(),
        lambda_a: s,
    })
}

/// Largest `c` with `(x, R1Q⁻¹x) ∈ S_xu` and `R2Q⁻¹x ∈ D` for all `x ∈ E(c)`,
/// i.e. the minimum over rows of `h_i / ‖[Lᵀ L⁻¹R1ᵀ]H_iᵀ‖` (and the analogue
/// for `D`), where `Q = LLᵀ`.
pub fn max_c0(ell: &ContractiveEllipsoid, s_xu: &HPolytope, d: &HPolytope) -> Result<f64> {
    let n = ell.q.nrows();
    let (m, l) = (ell.r1.nrows(), ell.r2.nrows());
    if s_xu.dim() != n + m || d.dim() != l {
        return Err(Error::DimensionMismatch("safe sets do not match the ellipsoid gains".into()));
    }
    s_xu.check_normal_form()?;
    d.check_normal_form()?;
    let lo = cholesky(&ell.q)?;
    let l_inv = lo.clone().try_inverse().ok_or(Error::NotPositiveDefinite)?;
    // maps a row of H over (x, u) to the ellipsoid-frame direction
    let mut map_xu = DMatrix::zeros(n, n + m);
    map_xu.view_mut((0, 0), (n, n)).copy_from(&lo.transpose());
    map_xu.view_mut((0, n), (n, m)).copy_from(&(&l_inv * ell.r1.transpose()));
    let map_d = &l_inv * ell.r2.transpose();
    let mut c = f64::INFINITY;
    for (set, map) in [(s_xu, &map_xu), (d, &map_d)] {
        for i in 0..set.num_rows() {
            let nrm = (map * set.h_mat().row(i).transpose()).norm();
            if nrm > 1e-14 {
                c = c.min(set.h_vec()[i] / nrm);
            }
        }
    }
    Ok(c)
}

/// Smallest `c` with `C ⊆ E(c)` over the vertices of `C` (`Exact`), or a
/// certified value over the corners of its bounding box (`Box`).
pub fn min_c_out(c: &HPolytope, q: &DMatrix<f64>, mode: RadiusMode) -> Result<f64> {
    let l = cholesky(q)?;
    let l_inv = l.try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let pts = match mode {
        RadiusMode::Exact if c.dim() <= VERTEX_DIM_LIMIT => c.vertices()?,
        RadiusMode::Exact => return Err(Error::DimensionLimit { dim: c.dim(), limit: VERTEX_DIM_LIMIT }),
        RadiusMode::Box => c.bounding_box()?.to_polytope().vertices()?,
    };
    Ok(pts.iter().map(|v| (&l_inv * v).norm()).fold(0.0, f64::max))
}

/// `γ = c₀/c_out`, `N = ⌊log γ / log λ_a⌋ + 1`, `λ = λ_aᴺ/γ`.
pub fn theorem6_params(c0: f64, c_out: f64, lambda_a: f64) -> Result<Theorem6Params> {
    if c0.is_nan() || c0 <= 0.0 || c_out.is_nan() || c_out <= 0.0 {
        return Err(Error::InvalidInput(format!("need c0 > 0 and c_out > 0, got {c0}, {c_out}")));
    }
    if c0 > c_out * (1.0 + 1e-9) {
        return Err(Error::InvalidInput(format!("c0 = {c0} exceeds c_out = {c_out}")));
    }
    if !(0.0..1.0).contains(&lambda_a) {
        return Err(Error::InvalidInput(format!("contraction rate {lambda_a} outside [0, 1)")));
    }
    let la = lambda_a.max(BISECTION_FLOOR);
    let gamma = (c0 / c_out).min(1.0);
    let n_steps = (gamma.ln() / la.ln()).floor() as usize + 1;
    let lambda = la.powi(n_steps as i32) / gamma;
    Ok(Theorem6Params { gamma, n_steps, lambda, c0, c_out })
}
