use nalgebra::{DMatrix, DVector};

use super::HPolytope;
use crate::error::{Error, Result};
use crate::solver::{solve_lp, LpProblem, LpStatus};

/// Largest intermediate row count Fourier–Motzkin may produce.
pub const FM_ROW_CAP: usize = 10_000;

const PARALLEL_TOL: f64 = 1e-12;
const REDUNDANT_TOL: f64 = 1e-9;

impl HPolytope {
    /// Same set with rows normalised to unit length and every redundant row
    /// removed. Each dropped row is certified by a support LP over the rows
    /// still kept at that point.
    pub fn remove_redundancy(&self) -> Result<HPolytope> {
        let n = self.dim();
        if self.is_empty()? {
            return Ok(HPolytope::empty(n));
        }
        let mut rows: Vec<(DVector<f64>, f64)> = Vec::with_capacity(self.num_rows());
        for i in 0..self.num_rows() {
            let a = self.h_mat().row(i).transpose();
            let nrm = a.norm();
            if nrm <= 1e-14 {
                continue;
            }
            let a = a / nrm;
            let b = self.h_vec()[i] / nrm;
            match rows.iter_mut().find(|(r, _)| (r - &a).amax() <= PARALLEL_TOL) {
                Some(existing) => existing.1 = existing.1.min(b),
                None => rows.push((a, b)),
            }
        }
        if rows.is_empty() {
            return Ok(HPolytope::universe(n));
        }
        let mut keep = vec![true; rows.len()];
        for i in 0..rows.len() {
            let others: Vec<usize> = (0..rows.len()).filter(|&j| j != i && keep[j]).collect();
            if others.is_empty() {
                continue;
            }
            let sub = rows_to_polytope(&rows, &others, n);
            match sub.support(&rows[i].0) {
                Ok(s) => {
                    if s <= rows[i].1 + REDUNDANT_TOL * rows[i].1.abs().max(1.0) {
                        keep[i] = false;
                    }
                }
                Err(Error::Unbounded) => {}
                Err(Error::EmptySet) => {}
                Err(e) => return Err(e),
            }
        }
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| keep[i]).collect();
        Ok(rows_to_polytope(&rows, &idx, n))
    }

    /// Projection onto the first `k` coordinates by Fourier–Motzkin
    /// elimination of the trailing ones, with redundancy removal after every
    /// eliminated variable.
    pub fn project(&self, k: usize) -> Result<HPolytope> {
        let n = self.dim();
        if k > n {
            return Err(Error::InvalidInput(format!("cannot keep {k} of {n} coordinates")));
        }
        let mut cur = self.remove_redundancy()?;
        if cur.is_trivially_empty() {
            return Ok(HPolytope::empty(k));
        }
        for j in (k..n).rev() {
            cur = eliminate_last(&cur, j)?;
            if cur.is_trivially_empty() {
                return Ok(HPolytope::empty(k));
            }
            cur = cur.remove_redundancy()?;
        }
        Ok(cur)
    }

    /// Exact projection onto the first one or two coordinates, built from
    /// support queries instead of elimination. Works in any ambient dimension
    /// and never hits the Fourier–Motzkin row cap.
    pub fn project_low_dim(&self, k: usize) -> Result<HPolytope> {
        let n = self.dim();
        if k == 0 || k > 2 || k > n {
            return Err(Error::InvalidInput(format!("support projection needs k in {{1, 2}}, got {k}")));
        }
        if self.is_empty()? {
            return Ok(HPolytope::empty(k));
        }
        let lift = |d: &[f64]| {
            let mut v = DVector::zeros(n);
            for (i, &x) in d.iter().enumerate() {
                v[i] = x;
            }
            v
        };
        if k == 1 {
            let hi = self.support(&lift(&[1.0]))?;
            let lo = -self.support(&lift(&[-1.0]))?;
            return Ok(HPolytope::interval(lo, hi));
        }
        hull_2d(self, &lift)
    }

    /// Projection onto the first `k` coordinates, by support queries when
    /// `k <= 2` and by elimination otherwise.
    pub fn project_auto(&self, k: usize) -> Result<HPolytope> {
        if k == self.dim() {
            return self.remove_redundancy();
        }
        if (1..=2).contains(&k) {
            self.project_low_dim(k)
        } else {
            self.project(k)
        }
    }

    /// A maximiser of `⟨dir, x⟩`, from the primal LP.
    pub fn support_point(&self, dir: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let n = self.dim();
        let lp = LpProblem::new(n)
            .minimize(-dir)
            .subject_to_ub(self.h_mat().clone(), self.h_vec().clone());
        let sol = solve_lp(&lp)?;
        match sol.status {
            LpStatus::Optimal => Ok((-sol.objective, sol.point)),
            LpStatus::Unbounded => Err(Error::Unbounded),
            LpStatus::Infeasible => Err(Error::EmptySet),
        }
    }
}

fn rows_to_polytope(rows: &[(DVector<f64>, f64)], idx: &[usize], n: usize) -> HPolytope {
    let mut h = DMatrix::zeros(idx.len(), n);
    let mut b = DVector::zeros(idx.len());
    for (r, &i) in idx.iter().enumerate() {
        h.set_row(r, &rows[i].0.transpose());
        b[r] = rows[i].1;
    }
    HPolytope::new(h, b).expect("finite rows")
}

fn eliminate_last(p: &HPolytope, j: usize) -> Result<HPolytope> {
    let h = p.h_mat();
    let b = p.h_vec();
    let (mut pos, mut neg, mut zero) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..p.num_rows() {
        let c = h[(i, j)];
        if c > PARALLEL_TOL {
            pos.push(i);
        } else if c < -PARALLEL_TOL {
            neg.push(i);
        } else {
            zero.push(i);
        }
    }
    let total = zero.len() + pos.len() * neg.len();
    if total > FM_ROW_CAP {
        return Err(Error::RowLimit { rows: total, cap: FM_ROW_CAP });
    }
    let mut out_h = DMatrix::zeros(total.max(1), j);
    let mut out_b = DVector::zeros(total.max(1));
    if total == 0 {
        // variable appears nowhere with both signs: the projection is unconstrained
        out_b[0] = 1.0;
        return HPolytope::new(out_h, out_b);
    }
    let mut r = 0;
    for &i in &zero {
        for c in 0..j {
            out_h[(r, c)] = h[(i, c)];
        }
        out_b[r] = b[i];
        r += 1;
    }
    for &ip in &pos {
        for &iq in &neg {
            let sp = 1.0 / h[(ip, j)];
            let sq = -1.0 / h[(iq, j)];
            for c in 0..j {
                out_h[(r, c)] = h[(ip, c)] * sp + h[(iq, c)] * sq;
            }
            out_b[r] = b[ip] * sp + b[iq] * sq;
            r += 1;
        }
    }
    Ok(HPolytope::new(out_h, out_b)?.drop_vacuous_rows())
}

/// Iterative hull refinement for a 2D projection: keep a polygon of known
/// support points and query the outer normal of each edge until no edge can
/// be pushed outward.
fn hull_2d(p: &HPolytope, lift: &dyn Fn(&[f64]) -> DVector<f64>) -> Result<HPolytope> {
    let tol = 1e-9;
    let pt = |d: [f64; 2]| -> Result<[f64; 2]> {
        let (_, x) = p.support_point(&lift(&d))?;
        Ok([x[0], x[1]])
    };
    // Initial points from eight compass directions.
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for k in 0..8 {
        let a = std::f64::consts::PI * (k as f64) / 4.0;
        let q = pt([a.cos(), a.sin()])?;
        if !pts.iter().any(|v| (v[0] - q[0]).abs() < tol && (v[1] - q[1]).abs() < tol) {
            pts.push(q);
        }
    }
    let scale = pts.iter().fold(1.0f64, |m, v| m.max(v[0].abs()).max(v[1].abs()));
    let mut hull = convex_hull(&pts, tol * scale);
    if hull.len() == 1 {
        return Ok(HPolytope::point(&hull[0]));
    }
    if hull.len() == 2 {
        return Ok(segment(hull[0], hull[1]));
    }
    // Edges already certified as facets, keyed by their endpoints.
    let mut certified: Vec<([f64; 2], [f64; 2])> = Vec::new();
    for _ in 0..10_000 {
        let mut grew = false;
        for e in 0..hull.len() {
            let a = hull[e];
            let b = hull[(e + 1) % hull.len()];
            if certified.contains(&(a, b)) {
                continue;
            }
            // counter-clockwise order: outward normal is (dy, −dx)
            let nrm = [b[1] - a[1], a[0] - b[0]];
            let len = (nrm[0] * nrm[0] + nrm[1] * nrm[1]).sqrt();
            let nrm = [nrm[0] / len, nrm[1] / len];
            let (s, x) = p.support_point(&lift(&nrm))?;
            let offset = nrm[0] * a[0] + nrm[1] * a[1];
            if s <= offset + tol * scale {
                certified.push((a, b));
            } else {
                pts.push([x[0], x[1]]);
                grew = true;
            }
        }
        if !grew {
            return polygon_to_polytope(&hull);
        }
        hull = convex_hull(&pts, tol * scale);
    }
    Err(Error::Numerical("2D projection did not terminate".into()))
}

fn segment(a: [f64; 2], b: [f64; 2]) -> HPolytope {
    let d = [b[0] - a[0], b[1] - a[1]];
    let nrm = [-d[1], d[0]];
    let rows = vec![
        vec![nrm[0], nrm[1]],
        vec![-nrm[0], -nrm[1]],
        vec![d[0], d[1]],
        vec![-d[0], -d[1]],
    ];
    let rhs = [
        nrm[0] * a[0] + nrm[1] * a[1],
        -(nrm[0] * a[0] + nrm[1] * a[1]),
        d[0] * b[0] + d[1] * b[1],
        -(d[0] * a[0] + d[1] * a[1]),
    ];
    HPolytope::from_rows(&rows, &rhs).expect("finite segment")
}

fn polygon_to_polytope(hull: &[[f64; 2]]) -> Result<HPolytope> {
    let m = hull.len();
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for i in 0..m {
        let a = hull[i];
        let b = hull[(i + 1) % m];
        let nrm = [b[1] - a[1], a[0] - b[0]];
        let len = (nrm[0] * nrm[0] + nrm[1] * nrm[1]).sqrt();
        if len <= 1e-15 {
            continue;
        }
        rows.push(vec![nrm[0] / len, nrm[1] / len]);
        rhs.push((nrm[0] * a[0] + nrm[1] * a[1]) / len);
    }
    HPolytope::from_rows(&rows, &rhs)?.remove_redundancy()
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
pub(crate) fn convex_hull(points: &[[f64; 2]], tol: f64) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol);
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= tol * tol {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= tol * tol {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}
