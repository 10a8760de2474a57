use super::{HPolytope, RadiusMode, TAU_SET, VERTEX_DIM_LIMIT};
use crate::error::{Error, Result};
use crate::solver::project_point;

/// Hausdorff distance between nested polytopes `X ⊆ Y`: the largest distance
/// from a vertex of `Y` to `X`. Above the vertex-enumeration limit the
/// bounding-box corners of `Y` are used instead, which over-estimates.
pub fn hausdorff_nested(x: &HPolytope, y: &HPolytope) -> Result<f64> {
    hausdorff_nested_with(x, y, RadiusMode::Exact)
}

pub fn hausdorff_nested_with(x: &HPolytope, y: &HPolytope, mode: RadiusMode) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch("Hausdorff distance between different dimensions".into()));
    }
    if !y.contains(x, TAU_SET)? {
        return Err(Error::ContainmentViolation("first set is not contained in the second".into()));
    }
    if x.is_empty()? {
        return Err(Error::EmptySet);
    }
    let points = if mode == RadiusMode::Exact && y.dim() <= VERTEX_DIM_LIMIT {
        y.vertices()?
    } else {
        let b = y.bounding_box()?;
        b.to_polytope().vertices().or_else(|_| Ok::<_, Error>(corners(&b.lower, &b.upper)))?
    };
    let mut d = 0.0f64;
    for v in &points {
        let (_, dist) = project_point(v, x)?;
        d = d.max(dist);
    }
    Ok(d)
}

fn corners(lo: &[f64], hi: &[f64]) -> Vec<nalgebra::DVector<f64>> {
    let n = lo.len();
    (0..1usize << n)
        .map(|mask| nalgebra::DVector::from_iterator(n, (0..n).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] })))
        .collect()
}
