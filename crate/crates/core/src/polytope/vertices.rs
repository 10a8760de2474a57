use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Box, HPolytope};
use crate::error::{Error, Result};
use crate::solver::linalg::{numerical_rank, solve_robust};

/// Highest dimension for exact vertex enumeration.
pub const VERTEX_DIM_LIMIT: usize = 6;

const TIGHT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusMode {
    Exact,
    Box,
}

impl HPolytope {
    /// Vertex set of a bounded polytope, deduplicated.
    pub fn vertices(&self) -> Result<Vec<DVector<f64>>> {
        let n = self.dim();
        if n > VERTEX_DIM_LIMIT {
            return Err(Error::DimensionLimit { dim: n, limit: VERTEX_DIM_LIMIT });
        }
        if self.is_empty()? {
            return Ok(Vec::new());
        }
        if !self.is_bounded()? {
            return Err(Error::Unbounded);
        }
        let p = self.remove_redundancy()?;
        match n {
            0 => Ok(vec![DVector::zeros(0)]),
            1 => {
                let hi = p.support(&DVector::from_element(1, 1.0))?;
                let lo = -p.support(&DVector::from_element(1, -1.0))?;
                if (hi - lo).abs() <= 1e-12 * (1.0 + hi.abs()) {
                    Ok(vec![DVector::from_element(1, hi)])
                } else {
                    Ok(vec![DVector::from_element(1, lo), DVector::from_element(1, hi)])
                }
            }
            2 => match polygon_vertices(&p) {
                Some(v) => Ok(v),
                None => adjacency_search(&p),
            },
            _ => adjacency_search(&p),
        }
    }

    /// Componentwise bounds from `2n` support queries.
    pub fn bounding_box(&self) -> Result<Box> {
        let n = self.dim();
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            let mut d = DVector::zeros(n);
            d[i] = 1.0;
            upper[i] = self.support(&d)?;
            d[i] = -1.0;
            lower[i] = -self.support(&d)?;
        }
        Ok(Box { lower, upper })
    }

    /// Radius of the smallest origin-centred ball containing the set.
    /// `Box` mode returns the farthest bounding-box corner, an upper bound.
    pub fn radius_from_origin(&self, mode: RadiusMode) -> Result<f64> {
        if !self.contains_point(&DVector::zeros(self.dim()), 1e-9) {
            return Err(Error::InvalidInput("radius needs the origin inside the set".into()));
        }
        match mode {
            RadiusMode::Exact => Ok(self.vertices()?.iter().map(|v| v.norm()).fold(0.0, f64::max)),
            RadiusMode::Box => Ok(self.bounding_box()?.max_corner_norm()),
        }
    }
}

/// Vertices of a full-dimensional polygon by ordering facets by angle. Returns
/// `None` when the facet structure is degenerate.
fn polygon_vertices(p: &HPolytope) -> Option<Vec<DVector<f64>>> {
    let m = p.num_rows();
    if m < 3 {
        return None;
    }
    let mut order: Vec<(f64, usize)> = (0..m)
        .map(|i| (p.h_mat()[(i, 1)].atan2(p.h_mat()[(i, 0)]), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let i = order[k].1;
        let j = order[(k + 1) % m].1;
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[p.h_mat()[(i, 0)], p.h_mat()[(i, 1)], p.h_mat()[(j, 0)], p.h_mat()[(j, 1)]],
        );
        let det = a.determinant();
        if det.abs() <= 1e-12 {
            return None;
        }
        let b = DVector::from_vec(vec![p.h_vec()[i], p.h_vec()[j]]);
        let v = a.lu().solve(&b)?;
        let scale = 1.0 + v.amax();
        if !p.contains_point(&v, 1e-8 * scale) {
            return None;
        }
        out.push(v);
    }
    Some(dedup(out))
}

fn tight_rows(p: &HPolytope, x: &DVector<f64>) -> Vec<usize> {
    let scale = 1.0 + x.amax();
    let s = p.h_vec() - p.h_mat() * x;
    (0..p.num_rows()).filter(|&i| s[i].abs() <= TIGHT_TOL * scale).collect()
}

/// Moves a feasible point along null directions of its tight rows until it
/// becomes a vertex, then snaps it onto the tight rows.
fn polish_to_vertex(p: &HPolytope, mut x: DVector<f64>) -> Result<DVector<f64>> {
    let n = p.dim();
    for _ in 0..=n + 1 {
        let tight = tight_rows(p, &x);
        let ht = p.h_mat().select_rows(tight.iter());
        let rank = if tight.is_empty() { 0 } else { numerical_rank(&ht) };
        if rank == n {
            let bt = DVector::from_iterator(tight.len(), tight.iter().map(|&i| p.h_vec()[i]));
            if let Some(v) = solve_robust(&ht, &bt) {
                return Ok(v);
            }
            return Ok(x);
        }
        // a direction in the null space of the tight rows
        let dir = if tight.is_empty() {
            let mut d = DVector::zeros(n);
            d[0] = 1.0;
            d
        } else {
            null_direction(&ht)
        };
        let hd = p.h_mat() * &dir;
        let slack = p.h_vec() - p.h_mat() * &x;
        let mut t = f64::INFINITY;
        for i in 0..p.num_rows() {
            if hd[i] > 1e-12 {
                t = t.min(slack[i].max(0.0) / hd[i]);
            }
        }
        if !t.is_finite() {
            return Err(Error::Unbounded);
        }
        x += dir * t;
    }
    Err(Error::Numerical("could not reach a vertex".into()))
}

fn null_direction(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.ncols();
    // pad to a square matrix so the SVD exposes the full right singular basis
    let rows = m.nrows().max(n);
    let mut sq = DMatrix::zeros(rows, n);
    sq.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bk, bv), (k, &v)| if v < bv { (k, v) } else { (bk, bv) });
    vt.row(k).transpose()
}

/// Breadth-first walk over the vertex-edge graph. Degenerate vertices are
/// handled by trying every rank-(n−1) subset of the tight rows as an edge.
fn adjacency_search(p: &HPolytope) -> Result<Vec<DVector<f64>>> {
    let n = p.dim();
    let (_, start) = p.support_point(&DVector::from_iterator(n, (0..n).map(|i| 1.0 + 0.1 * i as f64)))?;
    let start = polish_to_vertex(p, start)?;
    let mut found = vec![start.clone()];
    let mut queue = VecDeque::from([start]);
    let mut guard = 0usize;
    while let Some(v) = queue.pop_front() {
        guard += 1;
        if guard > 100_000 {
            return Err(Error::Numerical("vertex enumeration did not terminate".into()));
        }
        let tight = tight_rows(p, &v);
        let scale = 1.0 + v.amax();
        for subset in combinations(tight.len(), n - 1) {
            let rows: Vec<usize> = subset.iter().map(|&k| tight[k]).collect();
            let hs = p.h_mat().select_rows(rows.iter());
            if numerical_rank(&hs) != n - 1 {
                continue;
            }
            let d0 = null_direction(&hs);
            for sign in [1.0, -1.0] {
                let d = &d0 * sign;
                let ok = tight.iter().all(|&i| (p.h_mat().row(i) * &d)[0] <= 1e-9);
                if !ok {
                    continue;
                }
                let hd = p.h_mat() * &d;
                let slack = p.h_vec() - p.h_mat() * &v;
                let mut t = f64::INFINITY;
                for i in 0..p.num_rows() {
                    if hd[i] > 1e-10 {
                        t = t.min(slack[i].max(0.0) / hd[i]);
                    }
                }
                if !t.is_finite() || t <= 1e-10 * scale {
                    continue;
                }
                let w = polish_to_vertex(p, &v + &d * t)?;
                if !found.iter().any(|f| (f - &w).amax() <= 1e-8 * (1.0 + w.amax())) {
                    found.push(w.clone());
                    queue.push_back(w);
                }
            }
        }
    }
    Ok(found)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn dedup(vs: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(vs.len());
    for v in vs {
        if !out.iter().any(|f| (f - &v).amax() <= 1e-9 * (1.0 + v.amax())) {
            out.push(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn has(vs: &[DVector<f64>], p: &[f64]) -> bool {
        vs.iter().any(|v| v.iter().zip(p).all(|(a, b)| (a - b).abs() < 1e-9))
    }

    #[test]
    fn square_and_interval() {
        let v = HPolytope::unit_box(2).vertices().unwrap();
        assert_eq!(v.len(), 4);
        for c in [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]] {
            assert!(has(&v, &c));
        }
        let v = HPolytope::interval(-0.5, 2.0).vertices().unwrap();
        assert_eq!(v.len(), 2);
        assert!(has(&v, &[-0.5]) && has(&v, &[2.0]));
    }

    #[test]
    fn cube_and_cross_polytope() {
        assert_eq!(HPolytope::unit_box(3).vertices().unwrap().len(), 8);
        assert_eq!(HPolytope::unit_box(4).vertices().unwrap().len(), 16);
        // octahedron |x|+|y|+|z| <= 1 has 8 facets meeting 4 at each vertex
        let mut rows = Vec::new();
        for s in 0..8 {
            rows.push(vec![
                if s & 1 == 0 { 1.0 } else { -1.0 },
                if s & 2 == 0 { 1.0 } else { -1.0 },
                if s & 4 == 0 { 1.0 } else { -1.0 },
            ]);
        }
        let oct = HPolytope::from_rows(&rows, &[1.0; 8]).unwrap();
        let v = oct.vertices().unwrap();
        assert_eq!(v.len(), 6);
        assert!(has(&v, &[0.0, 0.0, -1.0]));
    }

    #[test]
    fn degenerate_point_and_dimension_cap() {
        let v = HPolytope::origin(3).vertices().unwrap();
        assert_eq!(v.len(), 1);
        assert!(matches!(HPolytope::unit_box(7).vertices(), Err(Error::DimensionLimit { .. })));
    }

    #[test]
    fn radius_modes() {
        assert!((HPolytope::unit_box(2).radius_from_origin(RadiusMode::Exact).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!((HPolytope::interval(-1.5, 1.5).radius_from_origin(RadiusMode::Exact).unwrap() - 1.5).abs() < 1e-12);
        let diamond = HPolytope::from_rows(
            &[vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]],
            &[1.0; 4],
        )
        .unwrap();
        let bx = diamond.bounding_box().unwrap();
        assert!((bx.upper[0] - 1.0).abs() < 1e-12 && (bx.lower[1] + 1.0).abs() < 1e-12);
        assert!(diamond.radius_from_origin(RadiusMode::Box).unwrap() >= diamond.radius_from_origin(RadiusMode::Exact).unwrap());
    }
}
