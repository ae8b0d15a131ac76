//! Gram-matrix parameterizations and the linear functionals that express
//! distances, reprojection errors, depth terms and squared areas over them.
//!
//! Layouts (0-based):
//! - depth Gram `R` (m): `R[j][q] = δ_j δ_q`.
//! - augmented point Gram `S'` (3m+1): row 0 is the constant 1, row
//!   `1 + 3j + c` is coordinate `c` of point `j`.
//! - depth lift `T` (m + p̃₂): depths followed by one edge product per unique
//!   triangle edge.
//! - point lift `U` (3m+1+6p̃₂): `S'` rows followed by one six-row theta block
//!   per unique triangle edge.
//! - auxiliary `V` (6p̃₂): the theta rows of `U` alone.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::conic::{LinearFunctional, VarBlock};
use crate::error::{Error, Result};
use crate::geometry::{AreaQuarticCoeffs, ObservationSet};
use crate::graph::{point_row, LiftIndexMaps, THETA_PAIRS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramKind {
    Dgm,
    PgmAug,
    TLift,
    ULift,
    VAux,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GramLayout {
    pub kind: GramKind,
    pub dim: usize,
}

impl GramLayout {
    pub fn new(kind: GramKind, m: usize, maps: Option<&LiftIndexMaps>) -> Result<Self> {
        let p = || {
            maps.map(|mp| mp.p2_tilde())
                .ok_or_else(|| Error::Structural(format!("{kind:?} layout needs lift maps")))
        };
        let dim = match kind {
            GramKind::Dgm => m,
            GramKind::PgmAug => 3 * m + 1,
            GramKind::TLift => m + p()?,
            GramKind::ULift => 3 * m + 1 + 6 * p()?,
            GramKind::VAux => 6 * p()?,
        };
        Ok(Self { kind, dim })
    }
}

/// `R_jj + R_qq - 2<d_j,d_q> R_jq`, the squared distance in depth form.
pub fn g_i_dsl(block: VarBlock, j: usize, q: usize, dot_jq: f64) -> LinearFunctional {
    let mut f = LinearFunctional::new(block);
    f.add(j, j, 1.0).add(q, q, 1.0).add(j, q, -2.0 * dot_jq);
    f
}

/// `||P_j - P_q||^2` over the augmented point Gram.
pub fn g_i_pp(block: VarBlock, j: usize, q: usize) -> LinearFunctional {
    let mut f = LinearFunctional::new(block);
    for c in 0..3 {
        let (a, b) = (point_row(j, c), point_row(q, c));
        f.add(a, a, 1.0).add(b, b, 1.0).add(a, b, -2.0);
    }
    f
}

/// `||P_j x d||^2 = P_j^T (|d|^2 I - d d^T) P_j`.
pub fn f_reproj(block: VarBlock, j: usize, d: &Vector3<f64>) -> LinearFunctional {
    let mut f = LinearFunctional::new(block);
    let n2 = d.norm_squared();
    for a in 0..3 {
        for b in a..3 {
            let ra = point_row(j, a);
            let rb = point_row(j, b);
            if a == b {
                f.add(ra, ra, n2 - d[a] * d[a]);
            } else {
                f.add(ra, rb, -2.0 * d[a] * d[b]);
            }
        }
    }
    f
}

/// `<P_j, d>` read from the constant row of the augmented Gram.
pub fn f_mdh_pp(block: VarBlock, j: usize, d: &Vector3<f64>) -> LinearFunctional {
    let mut f = LinearFunctional::new(block);
    for c in 0..3 {
        f.add(0, point_row(j, c), d[c]);
    }
    f
}

/// Depth term for a point hidden in image `i`: the sum of `<P_j, d_{i,l}>`
/// over its pseudo-neighbours `l`, which must be visible in that image.
pub fn f_mdh_completion(
    block: VarBlock,
    obs: &ObservationSet,
    i: usize,
    j: usize,
    pseudo_neighbors: &[usize],
) -> Result<LinearFunctional> {
    if obs.is_visible(i, j) {
        return Err(Error::InvalidInput(format!("point {j} is visible in image {i}; completion does not apply")));
    }
    if pseudo_neighbors.is_empty() {
        return Err(Error::InvalidInput(format!("point {j} in image {i} has no pseudo-neighbours")));
    }
    let mut f = LinearFunctional::new(block);
    for &l in pseudo_neighbors {
        if !obs.is_visible(i, l) {
            return Err(Error::InvalidInput(format!("pseudo-neighbour {l} is not visible in image {i}")));
        }
        let d = obs.sightlines[i][l];
        for c in 0..3 {
            f.add(0, point_row(j, c), d[c]);
        }
    }
    Ok(f)
}

/// Squared area of triangle `(j,q,r)` over the depth lift, from its quartic
/// coefficients.
pub fn g_e_dsl(
    block: VarBlock,
    j: usize,
    q: usize,
    r: usize,
    coeffs: &AreaQuarticCoeffs,
    maps: &LiftIndexMaps,
) -> Result<LinearFunctional> {
    let [a1, b1, c1] = maps.omega(j, q, r)?;
    let g = &coeffs.g;
    let mut f = LinearFunctional::new(block);
    f.add(a1, a1, 0.25 * g[0])
        .add(a1, c1, 0.25 * g[1])
        .add(c1, c1, 0.25 * g[2])
        .add(a1, b1, 0.25 * g[3])
        .add(b1, c1, 0.25 * g[4])
        .add(b1, b1, 0.25 * g[5]);
    Ok(f)
}

/// Coefficients of `(P_a x P_b)_k` over monomials `coord(a,ca) coord(b,cb)`.
const CROSS: [[(usize, usize, f64); 2]; 3] = [
    [(1, 2, 1.0), (2, 1, -1.0)],
    [(2, 0, 1.0), (0, 2, -1.0)],
    [(0, 1, 1.0), (1, 0, -1.0)],
];

/// Squared area `1/4 ||P_j x P_r - P_j x P_q - P_q x P_r||^2` as a quadratic
/// form over theta rows, with row placement given by `index`.
fn area_over_theta(
    block: VarBlock,
    j: usize,
    q: usize,
    r: usize,
    index: &dyn Fn(usize, usize, usize, usize) -> Result<usize>,
) -> Result<LinearFunctional> {
    let mut f = LinearFunctional::new(block);
    for comp in CROSS.iter() {
        let mut w: Vec<(usize, f64)> = Vec::with_capacity(6);
        for (a, b, s) in [(j, r, 1.0), (j, q, -1.0), (q, r, -1.0)] {
            for &(ca, cb, v) in comp {
                w.push((index(a, ca, b, cb)?, s * v));
            }
        }
        for (x, &(ra, va)) in w.iter().enumerate() {
            f.add(ra, ra, 0.25 * va * va);
            for &(rb, vb) in &w[x + 1..] {
                f.add(ra, rb, 0.5 * va * vb);
            }
        }
    }
    Ok(f.normalized())
}

/// Squared area of triangle `(j,q,r)` over the point lift `U`.
pub fn g_e_pp(block: VarBlock, j: usize, q: usize, r: usize, maps: &LiftIndexMaps) -> Result<LinearFunctional> {
    area_over_theta(block, j, q, r, &|a, ca, b, cb| maps.theta_index(a, ca, b, cb))
}

/// Row of a theta monomial in an 18x18 triangle block whose rows are the
/// theta blocks of edges `(j,q)`, `(q,r)`, `(j,r)` in that order.
pub fn local_theta_index(tri: (usize, usize, usize), a: usize, ca: usize, b: usize, cb: usize) -> Result<usize> {
    let (j, q, r) = tri;
    let (lo, clo, hi, chi) = if a < b { (a, ca, b, cb) } else { (b, cb, a, ca) };
    let e = match (lo, hi) {
        (x, y) if (x, y) == (j, q) => 0,
        (x, y) if (x, y) == (q, r) => 1,
        (x, y) if (x, y) == (j, r) => 2,
        _ => return Err(Error::Structural(format!("edge ({lo}, {hi}) is not in triangle {tri:?}"))),
    };
    let t = THETA_PAIRS
        .iter()
        .position(|&p| p == (clo, chi))
        .ok_or_else(|| Error::Structural("theta monomial needs distinct coordinates".into()))?;
    Ok(6 * e + t)
}

/// Squared area over one 18x18 triangle block (accelerated variant).
pub fn g_e_pp_local(block: VarBlock, j: usize, q: usize, r: usize) -> Result<LinearFunctional> {
    area_over_theta(block, j, q, r, &|a, ca, b, cb| local_theta_index((j, q, r), a, ca, b, cb))
}

/// `off^2 <= diag` relation between two entries of one lifted matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominancePair {
    pub off: (usize, usize),
    pub diag: usize,
}

/// One pair per unique triangle edge: `T[j][q]^2 <= T[slot][slot]`.
pub fn consistency_constraints_t(maps: &LiftIndexMaps) -> Vec<DominancePair> {
    maps.edges
        .iter()
        .enumerate()
        .map(|(k, &(j, q))| DominancePair { off: (j, q), diag: maps.m + k })
        .collect()
}

/// Six pairs per unique triangle edge linking coordinate products of the
/// point block to theta diagonals.
pub fn consistency_constraints_u(maps: &LiftIndexMaps) -> Vec<DominancePair> {
    let mut out = Vec::with_capacity(6 * maps.p2_tilde());
    for (k, &(j, q)) in maps.edges.iter().enumerate() {
        for (t, &(cj, cq)) in THETA_PAIRS.iter().enumerate() {
            out.push(DominancePair { off: (point_row(j, cj), point_row(q, cq)), diag: 3 * maps.m + 1 + 6 * k + t });
        }
    }
    out
}

/// Theta vector of an edge: `(X_a Y_b, X_a Z_b, Y_a X_b, Y_a Z_b, Z_a X_b, Z_a Y_b)`.
pub fn theta(pa: &Vector3<f64>, pb: &Vector3<f64>) -> [f64; 6] {
    THETA_PAIRS.map(|(ca, cb)| pa[ca] * pb[cb])
}

/// Lifted depth vector `(δ_1..δ_m, δ_jδ_q for each unique edge)`.
pub fn depth_lift_vector(depths: &[f64], maps: &LiftIndexMaps) -> DVector<f64> {
    let mut v = DVector::zeros(maps.t_dim());
    for (j, &d) in depths.iter().enumerate() {
        v[j] = d;
    }
    for (k, &(j, q)) in maps.edges.iter().enumerate() {
        v[maps.m + k] = depths[j] * depths[q];
    }
    v
}

/// Augmented point vector `(1, P_1, .., P_m)`.
pub fn point_vector(points: &[Vector3<f64>]) -> DVector<f64> {
    let mut v = DVector::zeros(3 * points.len() + 1);
    v[0] = 1.0;
    for (j, p) in points.iter().enumerate() {
        for c in 0..3 {
            v[point_row(j, c)] = p[c];
        }
    }
    v
}

/// Lifted point vector `(1, P, theta blocks)`.
pub fn point_lift_vector(points: &[Vector3<f64>], maps: &LiftIndexMaps) -> DVector<f64> {
    let mut v = DVector::zeros(maps.u_dim());
    v.rows_mut(0, 3 * maps.m + 1).copy_from(&point_vector(points));
    for (k, &(j, q)) in maps.edges.iter().enumerate() {
        let th = theta(&points[j], &points[q]);
        for t in 0..6 {
            v[3 * maps.m + 1 + 6 * k + t] = th[t];
        }
    }
    v
}

/// Theta rows of one triangle in the local 18-row order.
pub fn triangle_theta_vector(points: &[Vector3<f64>], tri: (usize, usize, usize)) -> DVector<f64> {
    let (j, q, r) = tri;
    let mut v = DVector::zeros(18);
    for (e, (a, b)) in [(j, q), (q, r), (j, r)].into_iter().enumerate() {
        let th = theta(&points[a], &points[b]);
        for t in 0..6 {
            v[6 * e + t] = th[t];
        }
    }
    v
}

pub fn outer(v: &DVector<f64>) -> DMatrix<f64> {
    v * v.transpose()
}
