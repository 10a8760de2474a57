//! Preview MPC: feasible domains under a recursive-feasibility constraint,
//! the convergence certificate of their projections, and a closed-loop
//! simulator.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariance::{invariance_violation, pre_k};
use crate::polytope::{HPolytope, TAU_SET};
use crate::regret::{algorithm1, algorithm2, RegretCertificate, RegretInputs, TRUE_DP_BUDGET};
use crate::solver::{controllability_rank, solve_qp, QpProblem, QpStatus};
use crate::systems::{augment, collaborative, Dynamics, LinearSystem};

/// Recursive-feasibility constraint on the MPC problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Rfc {
    /// `x_p ∈ C`.
    TerminalSet,
    /// `(x₁, d_{1:p−1}, d_p) ∈ C_max,p` for every `d_p ∈ D`.
    MaxRcis { c_max_p: HPolytope },
    /// No constraint beyond the safe set; used for ablation.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub p: usize,
    pub terminal: HPolytope,
    #[serde(with = "crate::serde_mat")]
    pub q_s: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub r_s: DMatrix<f64>,
    pub rfc: Rfc,
}

impl MpcConfig {
    /// Identity weights and the terminal-set constraint.
    pub fn new(sys: &LinearSystem, p: usize, terminal: HPolytope) -> Self {
        let (n, m) = (sys.n(), sys.m());
        Self { p, terminal, q_s: DMatrix::identity(n, n), r_s: DMatrix::identity(m, m), rfc: Rfc::TerminalSet }
    }

    fn validate(&self, sys: &LinearSystem) -> Result<()> {
        let (n, m, l) = (sys.n(), sys.m(), sys.l());
        if self.p == 0 {
            return Err(Error::InvalidInput("MPC horizon must be at least 1".into()));
        }
        if self.terminal.dim() != n || self.q_s.shape() != (n, n) || self.r_s.shape() != (m, m) {
            return Err(Error::DimensionMismatch("MPC configuration does not match the system".into()));
        }
        if let Rfc::MaxRcis { c_max_p } = &self.rfc {
            if c_max_p.dim() != n + self.p * l {
                return Err(Error::DimensionMismatch("C_max,p has the wrong dimension".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibleDomain {
    /// `F_p(C)` over `(x₀, d_{0:p−1})`, when within budget.
    pub full: Option<HPolytope>,
    /// `Proj_n(F_p(C)) = Pre^p_{D(Σ)}(C, S_xu × D)`.
    pub projection: HPolytope,
}

/// Rejects `C` unless it is an RCIS of Σ in `S_xu`.
pub fn check_terminal(sys: &LinearSystem, c: &HPolytope) -> Result<()> {
    if c.dim() != sys.n() {
        return Err(Error::DimensionMismatch("terminal set must live in the state space".into()));
    }
    match invariance_violation(sys, c, &sys.s_xu, TAU_SET)? {
        Some(point) => Err(Error::NotInvariant { point }),
        None => Ok(()),
    }
}

/// Feasible domain of the MPC with terminal set `C`. The full set is built
/// only when `want_full` and `n + p·l <= TRUE_DP_BUDGET`.
pub fn feasible_domain(sys: &LinearSystem, c: &HPolytope, p: usize, want_full: bool) -> Result<FeasibleDomain> {
    check_terminal(sys, c)?;
    let co = collaborative(sys);
    let projection = pre_k(&co, c, &co.s, p)?.remove_redundancy()?;
    let dim = sys.n() + p * sys.l();
    let full = if want_full && dim <= TRUE_DP_BUDGET {
        if p == 0 {
            Some(c.clone())
        } else {
            let sp = augment(sys, p);
            let target = c.cartesian_product(&sys.d.power(p));
            Some(pre_k(&sp, &target, &sp.s_xu, p)?.remove_redundancy()?)
        }
    } else {
        None
    };
    Ok(FeasibleDomain { full, projection })
}

/// Bound on `d(Proj_n(F_p(C)), C_max,co)` with `C` in place of
/// `Proj_n(C_max,p0)` and `p0 = 0`. Uses the controllable-case certificate
/// when D(Σ) is controllable and the ellipsoid route otherwise.
pub fn theorem9_certificate(sys: &LinearSystem, c: &HPolytope, c_max_co: &HPolytope) -> Result<RegretCertificate> {
    let inp = RegretInputs { sys, c_max_co, c_max_p0: c, p0: 0, projection: Some(c) };
    let co = collaborative(sys);
    if controllability_rank(&co.a, &co.b) == sys.n() {
        algorithm2(&inp, sys.n())
    } else {
        algorithm1(&inp, true)
    }
}

/// One solve of the preview MPC.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MpcStep {
    pub feasible: bool,
    pub u0: Vec<f64>,
    /// `x₀, …, x_p`.
    pub states: Vec<Vec<f64>>,
    /// `u₀, …, u_{p−1}`.
    pub inputs: Vec<Vec<f64>>,
    pub cost: f64,
}

/// Condensed prediction `x_t = Φ_t x₀ + Γ_t u + w_t`.
struct Prediction {
    phi: Vec<DMatrix<f64>>,
    gamma: Vec<DMatrix<f64>>,
    w: Vec<DVector<f64>>,
}

fn predict(sys: &LinearSystem, p: usize, preview: &[DVector<f64>]) -> Prediction {
    let (n, m) = (sys.n(), sys.m());
    let mut phi = vec![DMatrix::identity(n, n)];
    let mut gamma = vec![DMatrix::zeros(n, p * m)];
    let mut w = vec![DVector::zeros(n)];
    for t in 0..p {
        let next_phi = &sys.a * &phi[t];
        let mut next_gamma = &sys.a * &gamma[t];
        let mut blk = next_gamma.view_mut((0, t * m), (n, m));
        blk += &sys.b;
        let next_w = &sys.a * &w[t] + &sys.e * &preview[t];
        phi.push(next_phi);
        gamma.push(next_gamma);
        w.push(next_w);
    }
    Prediction { phi, gamma, w }
}

/// Solves `min Σ_{t=1}^{p} x_tᵀQ_s x_t + u_{t−1}ᵀR_s u_{t−1}` subject to the
/// dynamics with the previewed disturbances, `(x_t, u_t) ∈ S_xu` for
/// `t < p`, and the configured recursive-feasibility constraint.
pub fn mpc_step(sys: &LinearSystem, cfg: &MpcConfig, x0: &DVector<f64>, preview: &[DVector<f64>]) -> Result<MpcStep> {
    cfg.validate(sys)?;
    let (n, m, l, p) = (sys.n(), sys.m(), sys.l(), cfg.p);
    if x0.len() != n {
        return Err(Error::DimensionMismatch("initial state has the wrong dimension".into()));
    }
    if preview.len() < p || preview.iter().any(|d| d.len() != l) {
        return Err(Error::DimensionMismatch(format!("need {p} previewed disturbances of dimension {l}")));
    }
    let pr = predict(sys, p, preview);
    let nu = p * m;

    let mut g = DMatrix::zeros(nu, nu);
    let mut c = DVector::zeros(nu);
    for t in 1..=p {
        let gt = &pr.gamma[t];
        let off = &pr.phi[t] * x0 + &pr.w[t];
        g += gt.transpose() * &cfg.q_s * gt * 2.0;
        c += gt.transpose() * &cfg.q_s * &off * 2.0;
        let mut blk = g.view_mut(((t - 1) * m, (t - 1) * m), (m, m));
        blk += &cfg.r_s * 2.0;
    }
    let g = crate::solver::linalg::symmetrize(&g);

    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    // H (x_t) + G u <= h  with x_t = Φ x₀ + Γ u + w
    let mut push_state_rows = |hx: &DMatrix<f64>, hu: Option<(&DMatrix<f64>, usize)>, h: &DVector<f64>, t: usize| {
        let lhs = hx * &pr.gamma[t];
        let shift = hx * (&pr.phi[t] * x0 + &pr.w[t]);
        for i in 0..hx.nrows() {
            let mut r = lhs.row(i).transpose();
            if let Some((hu, k)) = hu {
                for j in 0..m {
                    r[k * m + j] += hu[(i, j)];
                }
            }
            rows.push(r);
            rhs.push(h[i] - shift[i]);
        }
    };
    let s = &sys.s_xu;
    let hx = s.h_mat().columns(0, n).into_owned();
    let hu = s.h_mat().columns(n, m).into_owned();
    for t in 0..p {
        push_state_rows(&hx, Some((&hu, t)), s.h_vec(), t);
    }
    match &cfg.rfc {
        Rfc::TerminalSet => push_state_rows(cfg.terminal.h_mat(), None, cfg.terminal.h_vec(), p),
        Rfc::MaxRcis { c_max_p } => {
            let hcx = c_max_p.h_mat().columns(0, n).into_owned();
            let mut h = c_max_p.h_vec().clone();
            for i in 0..c_max_p.num_rows() {
                let row = c_max_p.h_mat().row(i);
                for k in 0..p - 1 {
                    let known = &preview[k + 1];
                    for j in 0..l {
                        h[i] -= row[n + k * l + j] * known[j];
                    }
                }
                let last = row.columns(n + (p - 1) * l, l).transpose();
                h[i] -= sys.d.support(&last.into_owned())?;
            }
            push_state_rows(&hcx, None, &h, 1);
        }
        Rfc::None => {}
    }
    let a_ub = if rows.is_empty() {
        DMatrix::zeros(0, nu)
    } else {
        DMatrix::from_fn(rows.len(), nu, |i, j| rows[i][j])
    };
    let qp = QpProblem {
        g,
        c,
        a_ub,
        b_ub: DVector::from_vec(rhs),
        a_eq: DMatrix::zeros(0, nu),
        b_eq: DVector::zeros(0),
    };
    let sol = solve_qp(&qp, None)?;
    if sol.status == QpStatus::Infeasible {
        return Ok(MpcStep { feasible: false, u0: Vec::new(), states: Vec::new(), inputs: Vec::new(), cost: f64::NAN });
    }
    let u = sol.point;
    let mut states = Vec::with_capacity(p + 1);
    let mut cost = 0.0;
    for t in 0..=p {
        let x = &pr.phi[t] * x0 + &pr.gamma[t] * &u + &pr.w[t];
        if t > 0 {
            let ut = u.rows((t - 1) * m, m);
            cost += x.dot(&(&cfg.q_s * &x)) + ut.dot(&(&cfg.r_s * ut));
        }
        states.push(x.iter().copied().collect());
    }
    let inputs: Vec<Vec<f64>> = (0..p).map(|t| u.rows(t * m, m).iter().copied().collect()).collect();
    Ok(MpcStep { feasible: true, u0: inputs[0].clone(), states, inputs, cost })
}

/// One row of a closed-loop log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRow {
    pub t: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
    pub feasible: bool,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub rows: Vec<LogRow>,
}

impl Trajectory {
    pub fn infeasible_steps(&self) -> usize {
        self.rows.iter().filter(|r| !r.feasible).count()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let first = self.rows.first();
        let (n, m, l) = first.map_or((0, 0, 0), |r| (r.x.len(), r.u.len().max(1), r.d.len()));
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..m).map(|i| format!("u{i}")));
        header.extend((0..l).map(|i| format!("d{i}")));
        header.extend(["feasible".to_string(), "cost".to_string()]);
        let io = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
        wr.write_record(&header).map_err(io)?;
        for r in &self.rows {
            let mut rec = vec![r.t.to_string()];
            rec.extend(r.x.iter().map(|v| v.to_string()));
            if r.u.is_empty() {
                rec.extend((0..m).map(|_| String::new()));
            } else {
                rec.extend(r.u.iter().map(|v| v.to_string()));
            }
            rec.extend(r.d.iter().map(|v| v.to_string()));
            rec.push(r.feasible.to_string());
            rec.push(r.cost.to_string());
            wr.write_record(&rec).map_err(io)?;
        }
        wr.flush().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
        Ok(())
    }
}

/// Runs the preview MPC for `steps` steps; `stream` must hold at least
/// `steps + p − 1` disturbances. The start must be feasible. The run stops
/// after the first infeasible step, which is logged with an empty input.
pub fn simulate_closed_loop(
    sys: &LinearSystem,
    cfg: &MpcConfig,
    x0: &DVector<f64>,
    stream: &[DVector<f64>],
    steps: usize,
) -> Result<Trajectory> {
    let p = cfg.p;
    if stream.len() + 1 < steps + p {
        return Err(Error::InvalidInput(format!(
            "disturbance stream has {} entries, need {}",
            stream.len(),
            steps + p - 1
        )));
    }
    let mut x = x0.clone();
    let mut rows = Vec::with_capacity(steps);
    for t in 0..steps {
        let step = mpc_step(sys, cfg, &x, &stream[t..t + p])?;
        let d = &stream[t];
        if !step.feasible {
            if t == 0 {
                return Err(Error::InvalidInput("initial state and preview are outside the feasible domain".into()));
            }
            rows.push(LogRow { t, x: x.iter().copied().collect(), u: Vec::new(), d: d.iter().copied().collect(), feasible: false, cost: f64::NAN });
            break;
        }
        let u = DVector::from_vec(step.u0.clone());
        let stage = x.dot(&(&cfg.q_s * &x)) + u.dot(&(&cfg.r_s * &u));
        rows.push(LogRow { t, x: x.iter().copied().collect(), u: step.u0, d: d.iter().copied().collect(), feasible: true, cost: stage });
        x = sys.step(&x, &u, d);
    }
    Ok(Trajectory { rows })
}

/// Independent runs in parallel; results keep the order of `streams`.
pub fn simulate_batch(
    sys: &LinearSystem,
    cfg: &MpcConfig,
    x0: &DVector<f64>,
    streams: &[Vec<DVector<f64>>],
    steps: usize,
) -> Vec<Result<Trajectory>> {
    streams.par_iter().map(|s| simulate_closed_loop(sys, cfg, x0, s, steps)).collect()
}

/// `len` disturbances drawn uniformly from `D` by rejection from its bounding
/// box.
pub fn sample_disturbances(d: &HPolytope, len: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let bb = d.bounding_box()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(len);
    let mut tries = 0usize;
    while out.len() < len {
        tries += 1;
        if tries > 1000 * (len + 1) {
            return Err(Error::Numerical("rejection sampling of D failed".into()));
        }
        let v = DVector::from_iterator(
            bb.dim(),
            (0..bb.dim()).map(|i| if bb.upper[i] > bb.lower[i] { rng.random_range(bb.lower[i]..=bb.upper[i]) } else { bb.lower[i] }),
        );
        if d.contains_point(&v, 1e-12) {
            out.push(v);
        }
    }
    Ok(out)
}
