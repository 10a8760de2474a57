//! Example systems: the scalar system with closed-form invariant sets, the
//! planar system with a seeded random safe set, and parameterised templates
//! for lane keeping, biped walking and wind-turbine pitch control.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::HPolytope;
use crate::systems::LinearSystem;

/// Closed forms for `x⁺ = ax + u + d`, `|x| <= x̄`, `|u| <= ū`, `|d| <= d̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oracle1d {
    pub a: f64,
    pub x_bar: f64,
    pub u_bar: f64,
    pub d_bar: f64,
}

/// The scalar system and its oracle. Requires `a > 1` and
/// `x̄ >= (ū + d̄)/(a − 1)`.
pub fn build_1d(a: f64, x_bar: f64, u_bar: f64, d_bar: f64) -> Result<(LinearSystem, Oracle1d)> {
    if a.is_nan() || a <= 1.0 {
        return Err(Error::InvalidInput(format!("need a > 1, got {a}")));
    }
    if !(u_bar > 0.0 && d_bar > 0.0) {
        return Err(Error::InvalidInput("need positive input and disturbance bounds".into()));
    }
    if x_bar < (u_bar + d_bar) / (a - 1.0) {
        return Err(Error::InvalidInput(format!(
            "need x̄ >= (ū + d̄)/(a − 1) = {}, got {x_bar}",
            (u_bar + d_bar) / (a - 1.0)
        )));
    }
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let sys = LinearSystem::new(
        one(a),
        one(1.0),
        one(1.0),
        HPolytope::interval(-d_bar, d_bar),
        HPolytope::from_box(&[-x_bar, -u_bar], &[x_bar, u_bar]),
    )?;
    Ok((sys, Oracle1d { a, x_bar, u_bar, d_bar }))
}

impl Oracle1d {
    fn check(&self, p: usize) -> Result<()> {
        if self.a.powi(p as i32 - 1) * self.u_bar < self.d_bar {
            return Err(Error::InvalidInput(format!("closed form needs a^(p−1)·ū >= d̄, fails at p = {p}")));
        }
        Ok(())
    }

    /// Half-width of `C_max,co`.
    pub fn cmax_co(&self) -> f64 {
        (self.u_bar + self.d_bar) / (self.a - 1.0)
    }

    /// Half-width of `Proj₁(C_max,p)`.
    pub fn proj(&self, p: usize) -> Result<f64> {
        self.check(p)?;
        Ok((self.u_bar + self.d_bar - 2.0 * self.d_bar / self.a.powi(p as i32)) / (self.a - 1.0))
    }

    /// `d_p = 2d̄ / ((a − 1)aᵖ)`.
    pub fn dp(&self, p: usize) -> Result<f64> {
        self.check(p)?;
        Ok(2.0 * self.d_bar / ((self.a - 1.0) * self.a.powi(p as i32)))
    }

    /// `C_max,p` over `(x, d₁, …, d_p)`.
    pub fn cmax_p(&self, p: usize) -> Result<HPolytope> {
        self.check(p)?;
        let w = (self.u_bar - self.d_bar / self.a.powi(p as i32)) / (self.a - 1.0);
        let mut row = vec![1.0];
        for i in 1..=p {
            row.push(self.a.powi(-(i as i32)));
        }
        let neg: Vec<f64> = row.iter().map(|v| -v).collect();
        let mut rows = vec![row, neg];
        for i in 1..=p {
            for s in [1.0, -1.0] {
                let mut r = vec![0.0; p + 1];
                r[i] = s;
                rows.push(r);
            }
        }
        let mut rhs = vec![w, w];
        rhs.extend(std::iter::repeat_n(self.d_bar, 2 * p));
        HPolytope::from_rows(&rows, &rhs)
    }

    /// `λ0 = 1 − (2d̄/a^{p0})/(ū + d̄)`.
    pub fn lambda0(&self, p0: usize) -> Result<f64> {
        self.check(p0)?;
        Ok(1.0 - 2.0 * self.d_bar / self.a.powi(p0 as i32) / (self.u_bar + self.d_bar))
    }

    /// `γ_max = 1 − 1/a` for one step.
    pub fn gamma_max(&self) -> f64 {
        1.0 - 1.0 / self.a
    }
}

/// Options of the planar random-safe-set generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Random2dOptions {
    pub facets: usize,
    pub u_max: f64,
    /// Half-width of the box around the origin kept inside the safe set.
    pub inner: f64,
    /// Half-width of the outer box that keeps the safe set compact.
    pub outer: f64,
}

impl Default for Random2dOptions {
    fn default() -> Self {
        Self { facets: 10, u_max: 5.0, inner: 1.0, outer: 5.0 }
    }
}

/// `A = [[1.5, 1], [0, 1.1]]`, `B = [0; 1]`, `E = [1; 1]`, `d ∈ [−0.3, 0.3]`
/// with a random polygonal state constraint.
pub fn build_2d_random(seed: u64) -> LinearSystem {
    build_2d_random_with(seed, &Random2dOptions::default())
}

/// Random unit normals `n_i`, each with offset `‖n_i‖₁·inner + U(0, 2)` so the
/// box `[−inner, inner]²` stays inside.
pub fn build_2d_random_with(seed: u64, opts: &Random2dOptions) -> LinearSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(opts.facets + 6);
    let mut rhs = Vec::with_capacity(opts.facets + 6);
    for _ in 0..opts.facets {
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = theta.sin_cos();
        rows.push(vec![c, s, 0.0]);
        rhs.push((c.abs() + s.abs()) * opts.inner + rng.random_range(0.0..2.0));
    }
    for (i, sign) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)] {
        let mut r = vec![0.0; 3];
        r[i] = sign;
        rows.push(r);
        rhs.push(opts.outer);
    }
    rows.push(vec![0.0, 0.0, 1.0]);
    rows.push(vec![0.0, 0.0, -1.0]);
    rhs.extend([opts.u_max, opts.u_max]);
    let s_xu = HPolytope::from_rows(&rows, &rhs).expect("finite rows");
    LinearSystem {
        a: DMatrix::from_row_slice(2, 2, &[1.5, 1.0, 0.0, 1.1]),
        b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        e: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
        d: HPolytope::interval(-0.3, 0.3),
        s_xu,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    LaneKeeping,
    Biped,
    WindTurbine,
}

impl std::str::FromStr for TemplateName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lane_keeping" => Ok(Self::LaneKeeping),
            "biped" => Ok(Self::Biped),
            "wind_turbine" => Ok(Self::WindTurbine),
            other => Err(Error::InvalidInput(format!("unknown template {other:?}"))),
        }
    }
}

/// Parameters of a template. Unset fields fall back to placeholders that are
/// not taken from any published model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateParams {
    /// Discrete-time matrices; override everything else about the dynamics.
    #[serde(default, rename = "A")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "B")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "E")]
    pub e: Option<Vec<Vec<f64>>>,
    /// Sample time.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub h_com: Option<f64>,
    #[serde(default)]
    pub g: Option<f64>,
    /// Longitudinal speed of the bicycle model.
    #[serde(default)]
    pub speed: Option<f64>,
    /// Extra safe-set rows `J x + E_u u <= l`, each `[J..., E_u..., l]`.
    #[serde(default)]
    pub extra_rows: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Bound stated with the example.
    Published,
    /// Supplied by the caller.
    User,
    /// Stand-in value.
    Placeholder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dynamics: Source,
    /// One entry per row of `S_xu`.
    pub safe_rows: Vec<Source>,
    pub disturbance: Source,
    pub placeholders: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub name: TemplateName,
    pub system: LinearSystem,
    pub provenance: Provenance,
}

fn zoh(ac: &DMatrix<f64>, bc: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = ac.nrows();
    let m = bc.ncols();
    let mut big = DMatrix::zeros(n + m, n + m);
    big.view_mut((0, 0), (n, n)).copy_from(&(ac * dt));
    big.view_mut((0, n), (n, m)).copy_from(&(bc * dt));
    let ex = big.exp();
    (ex.view((0, 0), (n, n)).into_owned(), ex.view((0, n), (n, m)).into_owned())
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    crate::serde_mat::rows_to_matrix(rows).map_err(|e| Error::InvalidInput(format!("{what}: {e}")))
}

struct RowBuilder {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    src: Vec<Source>,
    width: usize,
}

impl RowBuilder {
    fn new(width: usize) -> Self {
        Self { rows: Vec::new(), rhs: Vec::new(), src: Vec::new(), width }
    }

    /// `|c·z| <= bound`, or `lo <= c·z <= hi` via [`Self::range`].
    fn abs(&mut self, coeffs: &[(usize, f64)], bound: f64) {
        self.range(coeffs, -bound, bound);
    }

    fn range(&mut self, coeffs: &[(usize, f64)], lo: f64, hi: f64) {
        let mut r = vec![0.0; self.width];
        for &(i, v) in coeffs {
            r[i] = v;
        }
        self.rows.push(r.clone());
        self.rhs.push(hi);
        self.rows.push(r.iter().map(|v| -v).collect());
        self.rhs.push(-lo);
        self.src.extend([Source::Published, Source::Published]);
    }

    fn extra(&mut self, extra: &Option<Vec<Vec<f64>>>) -> Result<()> {
        for row in extra.iter().flatten() {
            if row.len() != self.width + 1 {
                return Err(Error::InvalidInput(format!(
                    "extra safe-set row needs {} entries, got {}",
                    self.width + 1,
                    row.len()
                )));
            }
            self.rows.push(row[..self.width].to_vec());
            self.rhs.push(row[self.width]);
            self.src.push(Source::User);
        }
        Ok(())
    }

    fn finish(self) -> Result<(HPolytope, Vec<Source>)> {
        Ok((HPolytope::from_rows(&self.rows, &self.rhs)?, self.src))
    }
}

/// Builds one of the templates. Dynamics come from `params` when given, else
/// from placeholders; the safe-set bounds stated with each example are built
/// in.
pub fn build_template(name: TemplateName, params: &TemplateParams) -> Result<Template> {
    let mut placeholders = Vec::new();
    let mut take = |v: Option<f64>, default: f64, label: &str| match v {
        Some(x) => x,
        None => {
            placeholders.push(format!("{label} = {default}"));
            default
        }
    };
    let (n, m) = match name {
        TemplateName::LaneKeeping => (4, 1),
        TemplateName::Biped => (4, 1),
        TemplateName::WindTurbine => (3, 1),
    };
    let dt = take(params.dt, 0.1, "dt");
    let h_com = if name == TemplateName::Biped { take(params.h_com, 0.8, "h_com") } else { 0.0 };
    let g = if name == TemplateName::Biped { take(params.g, 9.81, "g") } else { 0.0 };
    let speed = if name == TemplateName::LaneKeeping { take(params.speed, 30.0, "speed") } else { 0.0 };

    let user_dyn = params.a.is_some() || params.b.is_some() || params.e.is_some();
    let (a, b, e, dyn_src) = if user_dyn {
        let (Some(a), Some(b), Some(e)) = (&params.a, &params.b, &params.e) else {
            return Err(Error::InvalidInput("A, B and E must be given together".into()));
        };
        (matrix(a, "A")?, matrix(b, "B")?, matrix(e, "E")?, Source::User)
    } else {
        let (a, b, e) = match name {
            TemplateName::LaneKeeping => {
                placeholders.push("bicycle coefficients (generic mid-size car)".into());
                let (mass, iz, lf, lr, cf, cr) = (1650.0, 2315.0, 1.11, 1.59, 1.33e5, 0.988e5);
                let u = speed;
                // (y, v, ΔΨ, r); inputs (δ_f, r_d)
                let ac = DMatrix::from_row_slice(
                    4,
                    4,
                    &[
                        0.0, 1.0, u, 0.0,
                        0.0, -(cf + cr) / (mass * u), 0.0, (lr * cr - lf * cf) / (mass * u) - u,
                        0.0, 0.0, 0.0, 1.0,
                        0.0, (lr * cr - lf * cf) / (iz * u), 0.0, -(lf * lf * cf + lr * lr * cr) / (iz * u),
                    ],
                );
                let bc = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, cf / mass, 0.0, 0.0, -u, lf * cf / iz, 0.0]);
                let (a, bd) = zoh(&ac, &bc, dt);
                (a, bd.columns(0, 1).into_owned(), bd.columns(1, 1).into_owned())
            }
            TemplateName::Biped => {
                let t = dt;
                let a = DMatrix::from_row_slice(
                    4,
                    4,
                    &[
                        1.0, t, t * t / 2.0, 0.0,
                        0.0, 1.0, t, 0.0,
                        0.0, 0.0, 1.0, 0.0,
                        0.0, 0.0, 0.0, 0.15,
                    ],
                );
                let b = DMatrix::from_row_slice(4, 1, &[t * t * t / 6.0, t * t / 2.0, t, 0.0]);
                let e = DMatrix::from_row_slice(4, 1, &[0.0, 0.0, 0.0, 1.0]);
                (a, b, e)
            }
            TemplateName::WindTurbine => {
                placeholders.push("rotor and pitch coefficients (generic first-order model)".into());
                let t = dt;
                let a = DMatrix::from_row_slice(3, 3, &[0.95, 0.0, -0.05, t, 1.0, 0.0, 0.0, 0.0, 1.0]);
                let b = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
                let e = DMatrix::from_row_slice(3, 1, &[0.02, 0.0, 0.0]);
                (a, b, e)
            }
        };
        (a, b, e, Source::Placeholder)
    };
    if a.nrows() != n || b.ncols() != m || e.ncols() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "template expects {n} states, {m} input and 1 disturbance"
        )));
    }

    let mut rb = RowBuilder::new(n + m);
    let d = match name {
        TemplateName::LaneKeeping => {
            rb.abs(&[(0, 1.0)], 0.9);
            rb.abs(&[(1, 1.0)], 1.2);
            rb.abs(&[(2, 1.0)], 0.05);
            rb.abs(&[(3, 1.0)], 0.3);
            rb.abs(&[(4, 1.0)], std::f64::consts::FRAC_PI_2);
            HPolytope::interval(-0.05, 0.05)
        }
        TemplateName::Biped => {
            rb.abs(&[(0, 1.0), (2, h_com / g), (3, -1.0)], 0.1);
            rb.abs(&[(0, 1.0)], 0.1);
            rb.abs(&[(1, 1.0)], 10.0);
            rb.abs(&[(2, 1.0)], 10.0);
            rb.abs(&[(3, 1.0)], 0.1);
            rb.abs(&[(4, 1.0)], 100.0);
            HPolytope::interval(-0.085, 0.085)
        }
        TemplateName::WindTurbine => {
            rb.abs(&[(0, 1.0)], 5.0);
            rb.abs(&[(1, 1.0)], 100.0);
            rb.range(&[(2, 1.0)], -4.53, 10.47);
            if params.extra_rows.is_none() {
                placeholders.push("input increment bound |Δβ| <= 1".into());
                rb.abs(&[(3, 1.0)], 1.0);
                let k = rb.src.len();
                rb.src[k - 2] = Source::Placeholder;
                rb.src[k - 1] = Source::Placeholder;
            }
            placeholders.push("wind disturbance bound |δv| <= 1".into());
            HPolytope::interval(-1.0, 1.0)
        }
    };
    rb.extra(&params.extra_rows)?;
    let (s_xu, safe_rows) = rb.finish()?;
    let disturbance = if name == TemplateName::WindTurbine { Source::Placeholder } else { Source::Published };
    let system = LinearSystem::new(a, b, e, d, s_xu)?;
    Ok(Template { name, system, provenance: Provenance { dynamics: dyn_src, safe_rows, disturbance, placeholders } })
}
