//! H-representation polytopes `{x : Hx <= h}`.

mod containment;
mod distance;
mod projection;
mod vertices;

pub use containment::{containment_ratio, containment_ratio_projected};
pub use distance::{hausdorff_nested, hausdorff_nested_with};
pub use projection::FM_ROW_CAP;
pub use vertices::{RadiusMode, VERTEX_DIM_LIMIT};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mutual-containment tolerance used for set equality.
pub const TAU_SET: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolytopeJson", into = "PolytopeJson")]
pub struct HPolytope {
    h: DMatrix<f64>,
    b: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolytopeJson {
    #[serde(rename = "H")]
    h: Vec<Vec<f64>>,
    #[serde(rename = "h")]
    rhs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
}

impl TryFrom<PolytopeJson> for HPolytope {
    type Error = String;

    fn try_from(j: PolytopeJson) -> std::result::Result<Self, String> {
        let rhs = j.rhs;
        let n = match (j.h.first(), j.dim) {
            (Some(r), _) => r.len(),
            (None, Some(d)) => d,
            (None, None) => return Err("polytope needs at least one row of H or a \"dim\" field".into()),
        };
        if j.h.iter().any(|r| r.len() != n) {
            return Err("rows of H have different lengths".into());
        }
        if rhs.len() != j.h.len() {
            return Err(format!("H has {} rows but h has {} entries", j.h.len(), rhs.len()));
        }
        let flat: Vec<f64> = j.h.iter().flatten().copied().collect();
        HPolytope::new(DMatrix::from_row_slice(j.h.len(), n, &flat), DVector::from_vec(rhs))
            .map_err(|e| e.to_string())
    }
}

impl From<HPolytope> for PolytopeJson {
    fn from(p: HPolytope) -> Self {
        let h = (0..p.h.nrows()).map(|i| p.h.row(i).iter().copied().collect()).collect();
        PolytopeJson { h, rhs: p.b.iter().copied().collect(), dim: Some(p.dim()) }
    }
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Box {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Box {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch("box bounds differ in length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidInput("box needs finite lower <= upper".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn to_polytope(&self) -> HPolytope {
        HPolytope::from_box(&self.lower, &self.upper)
    }

    /// Norm of the corner farthest from the origin.
    pub fn max_corner_norm(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l.abs().max(u.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

impl HPolytope {
    pub fn new(h: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if h.nrows() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "H has {} rows but h has {} entries",
                h.nrows(),
                b.len()
            )));
        }
        if h.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("polytope data must be finite".into()));
        }
        if h.nrows() == 0 {
            return Ok(Self::universe(h.ncols()));
        }
        Ok(Self { h, b })
    }

    /// Builds from row-major rows.
    pub fn from_rows(rows: &[Vec<f64>], rhs: &[f64]) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("rows of H have different lengths".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(rows.len(), n, &flat), DVector::from_row_slice(rhs))
    }

    /// The whole space, represented by the single vacuous row `0·x <= 1`.
    pub fn universe(n: usize) -> Self {
        Self { h: DMatrix::zeros(1, n), b: DVector::from_element(1, 1.0) }
    }

    /// The distinguished empty polytope `0·x <= −1`.
    pub fn empty(n: usize) -> Self {
        Self { h: DMatrix::zeros(1, n), b: DVector::from_element(1, -1.0) }
    }

    pub fn from_box(lower: &[f64], upper: &[f64]) -> Self {
        let n = lower.len();
        let mut h = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            h[(2 * i, i)] = 1.0;
            b[2 * i] = upper[i];
            h[(2 * i + 1, i)] = -1.0;
            b[2 * i + 1] = -lower[i];
        }
        Self { h, b }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Self::from_box(&[lo], &[hi])
    }

    /// `[−r, r]ⁿ`.
    pub fn symmetric_box(n: usize, r: f64) -> Self {
        Self::from_box(&vec![-r; n], &vec![r; n])
    }

    pub fn unit_box(n: usize) -> Self {
        Self::symmetric_box(n, 1.0)
    }

    /// The single point `{c}`.
    pub fn point(c: &[f64]) -> Self {
        Self::from_box(c, c)
    }

    pub fn origin(n: usize) -> Self {
        Self::point(&vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.h.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.h.nrows()
    }

    pub fn h_mat(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn h_vec(&self) -> &DVector<f64> {
        &self.b
    }

    /// True when some row reads `0·x <= negative`.
    pub fn is_trivially_empty(&self) -> bool {
        (0..self.h.nrows()).any(|i| self.h.row(i).amax() <= 1e-14 && self.b[i] < -1e-12)
    }

    /// Origin-interior normal form: every right-hand side strictly positive.
    pub fn is_normal_form(&self) -> bool {
        self.b.iter().all(|&v| v > 0.0)
    }

    pub fn check_normal_form(&self) -> Result<()> {
        match self.b.iter().position(|&v| v <= 0.0) {
            Some(row) => Err(Error::NormalForm { row, rhs: self.b[row] }),
            None => Ok(()),
        }
    }

    pub fn contains_point(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim() && (&self.h * x - &self.b).iter().all(|&s| s <= tol)
    }

    fn check_dim(&self, other: &HPolytope) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "polytopes live in R^{} and R^{}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }

    /// Row-stacked representation of `P ∩ Q`.
    pub fn intersect(&self, other: &HPolytope) -> Result<HPolytope> {
        self.check_dim(other)?;
        let (q1, q2, n) = (self.num_rows(), other.num_rows(), self.dim());
        let mut h = DMatrix::zeros(q1 + q2, n);
        h.view_mut((0, 0), (q1, n)).copy_from(&self.h);
        h.view_mut((q1, 0), (q2, n)).copy_from(&other.h);
        let mut b = DVector::zeros(q1 + q2);
        b.rows_mut(0, q1).copy_from(&self.b);
        b.rows_mut(q1, q2).copy_from(&other.b);
        Ok(HPolytope { h, b })
    }

    /// `{Hx <= λh}`; equals `λP` for `λ > 0` and the recession cone for `λ = 0`.
    pub fn scale(&self, lambda: f64) -> Result<HPolytope> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidInput(format!("scale factor must be finite and >= 0, got {lambda}")));
        }
        if self.is_trivially_empty() {
            return Ok(self.clone());
        }
        Ok(HPolytope { h: self.h.clone(), b: &self.b * lambda })
    }

    /// `P × Q` in `R^{n_P + n_Q}`.
    pub fn cartesian_product(&self, other: &HPolytope) -> HPolytope {
        let (q1, n1) = self.h.shape();
        let (q2, n2) = other.h.shape();
        let mut h = DMatrix::zeros(q1 + q2, n1 + n2);
        h.view_mut((0, 0), (q1, n1)).copy_from(&self.h);
        h.view_mut((q1, n1), (q2, n2)).copy_from(&other.h);
        let mut b = DVector::zeros(q1 + q2);
        b.rows_mut(0, q1).copy_from(&self.b);
        b.rows_mut(q1, q2).copy_from(&other.b);
        HPolytope { h, b }
    }

    /// `P^k`; the zero-fold power is the 0-dimensional universe.
    pub fn power(&self, k: usize) -> HPolytope {
        let mut out = HPolytope::universe(0);
        for _ in 0..k {
            out = out.cartesian_product(self);
        }
        out.drop_vacuous_rows()
    }

    /// `{z : Mz + v ∈ P}`.
    pub fn affine_preimage(&self, m: &DMatrix<f64>, v: &DVector<f64>) -> Result<HPolytope> {
        if m.nrows() != self.dim() || v.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "map {}x{} with offset {} into R^{}",
                m.nrows(),
                m.ncols(),
                v.len(),
                self.dim()
            )));
        }
        Ok(HPolytope { h: &self.h * m, b: &self.b - &self.h * v })
    }

    /// `P + t`.
    pub fn translate(&self, t: &DVector<f64>) -> Result<HPolytope> {
        if t.len() != self.dim() {
            return Err(Error::DimensionMismatch("translation length differs from dimension".into()));
        }
        if self.is_trivially_empty() {
            return Ok(self.clone());
        }
        Ok(HPolytope { h: self.h.clone(), b: &self.b + &self.h * t })
    }

    /// Tightens each row by the worst case of `H_i E d` over `d ∈ D`.
    pub fn erode_rows(&self, e: &DMatrix<f64>, d: &HPolytope) -> Result<HPolytope> {
        if e.nrows() != self.dim() || e.ncols() != d.dim() {
            return Err(Error::DimensionMismatch(format!(
                "E is {}x{}, expected {}x{}",
                e.nrows(),
                e.ncols(),
                self.dim(),
                d.dim()
            )));
        }
        let he = &self.h * e;
        let mut b = self.b.clone();
        for i in 0..self.num_rows() {
            let dir = he.row(i).transpose();
            if dir.amax() == 0.0 {
                continue;
            }
            b[i] -= d.support(&dir)?;
        }
        Ok(HPolytope { h: self.h.clone(), b })
    }

    /// Drops rows of the form `0·x <= c` with `c >= 0`. A contradictory
    /// vacuous row collapses the whole set to the distinguished empty form.
    pub fn drop_vacuous_rows(&self) -> HPolytope {
        if self.is_trivially_empty() {
            return HPolytope::empty(self.dim());
        }
        let keep: Vec<usize> = (0..self.num_rows()).filter(|&i| self.h.row(i).amax() > 1e-14).collect();
        if keep.is_empty() {
            return HPolytope::universe(self.dim());
        }
        self.select_rows(&keep)
    }

    pub(crate) fn select_rows(&self, rows: &[usize]) -> HPolytope {
        let h = self.h.select_rows(rows.iter());
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.b[i]));
        HPolytope { h, b }
    }

    /// Same rows with the coordinate order permuted: new coordinate `j` is old
    /// coordinate `perm[j]`.
    pub fn permute_coords(&self, perm: &[usize]) -> Result<HPolytope> {
        if perm.len() != self.dim() {
            return Err(Error::DimensionMismatch("permutation length differs from dimension".into()));
        }
        let h = self.h.select_columns(perm.iter());
        Ok(HPolytope { h, b: self.b.clone() })
    }

    /// Inserts unconstrained coordinates so that the result lives in `R^{dim + extra}`
    /// with the original coordinates first.
    pub fn lift(&self, extra: usize) -> HPolytope {
        let (q, n) = self.h.shape();
        let mut h = DMatrix::zeros(q, n + extra);
        h.view_mut((0, 0), (q, n)).copy_from(&self.h);
        HPolytope { h, b: self.b.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let p = HPolytope::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]], &[1.0, 3.0]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"H\""));
        let back: HPolytope = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
        let bad = serde_json::from_str::<HPolytope>(r#"{"H": [[1.0], [1.0, 2.0]], "h": [1, 2]}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn scale_examples() {
        let p = HPolytope::interval(-2.0, 2.0).scale(0.5).unwrap();
        assert!(p.set_equal(&HPolytope::interval(-1.0, 1.0), TAU_SET).unwrap());
        assert!(HPolytope::interval(-2.0, 2.0).scale(-1.0).is_err());
        let z = HPolytope::unit_box(2).scale(0.0).unwrap();
        assert!(z.set_equal(&HPolytope::origin(2), TAU_SET).unwrap());
    }

    #[test]
    fn intersection_examples() {
        let p = HPolytope::interval(-1.0, 1.0).intersect(&HPolytope::interval(0.0, 2.0)).unwrap();
        assert!(p.set_equal(&HPolytope::interval(0.0, 1.0), TAU_SET).unwrap());
        let e = HPolytope::interval(-1.0, 0.0).intersect(&HPolytope::interval(1.0, 2.0)).unwrap();
        assert!(e.is_empty().unwrap());
        assert!(HPolytope::unit_box(2).intersect(&HPolytope::unit_box(3)).is_err());
    }

    #[test]
    fn preimage_examples() {
        let p = HPolytope::interval(-1.0, 1.0)
            .affine_preimage(&DMatrix::from_element(1, 1, 2.0), &DVector::zeros(1))
            .unwrap();
        assert!(p.set_equal(&HPolytope::interval(-0.5, 0.5), TAU_SET).unwrap());
        let t = HPolytope::interval(-1.0, 1.0)
            .affine_preimage(&DMatrix::identity(1, 1), &DVector::from_element(1, 0.5))
            .unwrap();
        assert!(t.set_equal(&HPolytope::interval(-1.5, 0.5), TAU_SET).unwrap());
    }

    #[test]
    fn erosion_examples() {
        let p = HPolytope::from_rows(&[vec![1.0]], &[1.0]).unwrap();
        let e = DMatrix::from_element(1, 1, 1.0);
        let r = p.erode_rows(&e, &HPolytope::interval(-0.5, 0.5)).unwrap();
        assert!((r.h_vec()[0] - 0.5).abs() < 1e-12);
        let same = HPolytope::unit_box(1).erode_rows(&e, &HPolytope::origin(1)).unwrap();
        assert!(same.set_equal(&HPolytope::unit_box(1), TAU_SET).unwrap());
        let gone = HPolytope::unit_box(1).erode_rows(&e, &HPolytope::interval(-2.0, 2.0)).unwrap();
        assert!(gone.is_empty().unwrap());
    }

    #[test]
    fn product_dimension() {
        let d = HPolytope::interval(-0.3, 0.3);
        let p = HPolytope::unit_box(2).cartesian_product(&d.power(3));
        assert_eq!(p.dim(), 5);
        assert!(HPolytope::unit_box(1)
            .cartesian_product(&HPolytope::unit_box(1))
            .set_equal(&HPolytope::unit_box(2), TAU_SET)
            .unwrap());
    }
}
