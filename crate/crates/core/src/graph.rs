//! Simplicial structure on the reference image and lift index maps.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

/// How 2-simplices are selected from the closed triangles of the edge set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "cap")]
pub enum E3Mode {
    #[default]
    All,
    /// At most `c` triangles per edge, largest reference area first.
    PerEdgeCap(usize),
    /// Smallest per-edge cap whose lift slots form one connected component.
    Adaptive,
}

/// Edge set, triangle set and the unique-edge count used by the lifts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplicialGraph {
    pub m: usize,
    pub e2: Vec<(usize, usize)>,
    pub e3: Vec<(usize, usize, usize)>,
    pub p2_tilde: usize,
}

impl SimplicialGraph {
    /// Validates and assembles a graph from explicit edge and triangle lists.
    pub fn new(m: usize, mut e2: Vec<(usize, usize)>, mut e3: Vec<(usize, usize, usize)>) -> Result<Self> {
        for e in e2.iter_mut() {
            if e.0 == e.1 || e.0 >= m || e.1 >= m {
                return Err(Error::Structural(format!("invalid edge ({}, {})", e.0, e.1)));
            }
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        e2.sort_unstable();
        e2.dedup();
        let edge_set: BTreeSet<(usize, usize)> = e2.iter().copied().collect();
        for t in e3.iter_mut() {
            let mut v = [t.0, t.1, t.2];
            v.sort_unstable();
            if v[0] == v[1] || v[1] == v[2] || v[2] >= m {
                return Err(Error::Structural(format!("invalid triangle {:?}", t)));
            }
            for e in [(v[0], v[1]), (v[1], v[2]), (v[0], v[2])] {
                if !edge_set.contains(&e) {
                    return Err(Error::Structural(format!(
                        "triangle ({}, {}, {}) uses edge ({}, {}) missing from the edge set",
                        v[0], v[1], v[2], e.0, e.1
                    )));
                }
            }
            *t = (v[0], v[1], v[2]);
        }
        e3.sort_unstable();
        e3.dedup();
        let p2_tilde = unique_triangle_edges(&e3).len();
        Ok(Self { m, e2, e3, p2_tilde })
    }

    pub fn p1(&self) -> usize {
        self.e2.len()
    }

    pub fn p2(&self) -> usize {
        self.e3.len()
    }

    pub fn edge_index(&self) -> HashMap<(usize, usize), usize> {
        self.e2.iter().enumerate().map(|(k, &e)| (e, k)).collect()
    }

    /// Vertices sorted by distance to `j` in the reference points, excluding `j`.
    pub fn nearest(reference: &[Vector2<f64>], j: usize, count: usize) -> Vec<usize> {
        let mut others: Vec<(f64, usize)> = reference
            .iter()
            .enumerate()
            .filter(|&(l, _)| l != j)
            .map(|(l, p)| ((p - reference[j]).norm_squared(), l))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        others.into_iter().take(count).map(|(_, l)| l).collect()
    }
}

/// Symmetric k-nearest-neighbour edges with ties broken by lower index.
pub fn build_e2(reference: &[Vector2<f64>], k: usize) -> Result<Vec<(usize, usize)>> {
    let m = reference.len();
    if k == 0 || m <= k {
        return Err(Error::InvalidInput(format!("need 1 <= k < m, got k={k} m={m}")));
    }
    for a in 0..m {
        if !(reference[a].x.is_finite() && reference[a].y.is_finite()) {
            return Err(Error::NonFinite { image: 0, point: a });
        }
        for b in a + 1..m {
            if (reference[a] - reference[b]).norm() <= tol::DUPLICATE_POINT {
                return Err(Error::DuplicatePoints(a, b));
            }
        }
    }
    let mut edges = BTreeSet::new();
    for j in 0..m {
        for l in SimplicialGraph::nearest(reference, j, k) {
            edges.insert((j.min(l), j.max(l)));
        }
    }
    Ok(edges.into_iter().collect())
}

/// Triangles closed under the edge set, selected according to `mode`.
/// Triangles with (near) zero area in the reference image are dropped.
pub fn build_e3(
    e2: &[(usize, usize)],
    reference: &[Vector2<f64>],
    mode: E3Mode,
) -> Vec<(usize, usize, usize)> {
    let m = reference.len();
    let mut adj = vec![BTreeSet::new(); m];
    for &(j, q) in e2 {
        adj[j].insert(q);
        adj[q].insert(j);
    }
    let mut all = Vec::new();
    for &(j, q) in e2 {
        let (j, q) = (j.min(q), j.max(q));
        for &r in adj[j].intersection(&adj[q]) {
            if r > q {
                all.push((j, q, r));
            }
        }
    }
    all.sort_unstable();
    all.dedup();
    let scale = reference_scale(reference, e2);
    let area = |t: &(usize, usize, usize)| {
        let a = to3(&reference[t.0]);
        let b = to3(&reference[t.1]);
        let c = to3(&reference[t.2]);
        crate::geometry::area_sq(&a, &b, &c).sqrt()
    };
    all.retain(|t| area(t) > tol::DEGENERATE_AREA * scale * scale);
    match mode {
        E3Mode::All => all,
        E3Mode::PerEdgeCap(c) => cap_per_edge(&all, c, &area),
        E3Mode::Adaptive => {
            let max_cap = all.len().max(1);
            for c in 1..=max_cap {
                let sel = cap_per_edge(&all, c, &area);
                if slots_connected(&sel) || sel.len() == all.len() {
                    return sel;
                }
            }
            all
        }
    }
}

/// Builds both simplex sets from reference points.
pub fn build_graph(reference: &[Vector2<f64>], k: usize, mode: E3Mode) -> Result<SimplicialGraph> {
    let e2 = build_e2(reference, k)?;
    let e3 = build_e3(&e2, reference, mode);
    SimplicialGraph::new(reference.len(), e2, e3)
}

fn to3(p: &Vector2<f64>) -> Vector3<f64> {
    Vector3::new(p.x, p.y, 0.0)
}

fn reference_scale(reference: &[Vector2<f64>], e2: &[(usize, usize)]) -> f64 {
    if e2.is_empty() {
        return 1.0;
    }
    e2.iter().map(|&(j, q)| (reference[j] - reference[q]).norm()).sum::<f64>() / e2.len() as f64
}

fn cap_per_edge(
    all: &[(usize, usize, usize)],
    cap: usize,
    area: &dyn Fn(&(usize, usize, usize)) -> f64,
) -> Vec<(usize, usize, usize)> {
    let mut order: Vec<(f64, (usize, usize, usize))> = all.iter().map(|t| (area(t), *t)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    let mut out = Vec::new();
    for (_, t) in order {
        let edges = [(t.0, t.1), (t.1, t.2), (t.0, t.2)];
        if edges.iter().all(|e| count.get(e).copied().unwrap_or(0) < cap) {
            for e in edges {
                *count.entry(e).or_insert(0) += 1;
            }
            out.push(t);
        }
    }
    out.sort_unstable();
    out
}

fn slots_connected(e3: &[(usize, usize, usize)]) -> bool {
    let edges = unique_triangle_edges(e3);
    if edges.is_empty() {
        return false;
    }
    let index: HashMap<(usize, usize), usize> = edges.iter().enumerate().map(|(k, &e)| (e, k)).collect();
    let mut parent: Vec<usize> = (0..edges.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    for t in e3 {
        let a = find(&mut parent, index[&(t.0, t.1)]);
        let b = find(&mut parent, index[&(t.1, t.2)]);
        let c = find(&mut parent, index[&(t.0, t.2)]);
        parent[b] = a;
        parent[c] = a;
    }
    let root = find(&mut parent, 0);
    (0..edges.len()).all(|k| find(&mut parent, k) == root)
}

/// Sorted unique edges of a triangle list.
pub fn unique_triangle_edges(e3: &[(usize, usize, usize)]) -> Vec<(usize, usize)> {
    let mut set = BTreeSet::new();
    for &(j, q, r) in e3 {
        set.insert((j, q));
        set.insert((q, r));
        set.insert((j, r));
    }
    set.into_iter().collect()
}

/// Row/column placement of lifted monomials in the T and U matrices.
///
/// All indices are 0-based. In T, rows `0..m` hold the depths and row
/// `m + k` holds the product of depths on the k-th unique triangle edge.
/// In U, row 0 is the constant, rows `1 + 3j + c` hold coordinate `c` of
/// point `j`, and each unique triangle edge owns a block of six rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiftIndexMaps {
    pub m: usize,
    pub edges: Vec<(usize, usize)>,
    edge_pos: BTreeMap<(usize, usize), usize>,
}

/// Coordinate pairs `(c_low, c_high)` of the six monomials of a theta block,
/// `c_low` belonging to the lower-index point: XY, XZ, YX, YZ, ZX, ZY.
pub const THETA_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)];

impl LiftIndexMaps {
    pub fn new(graph: &SimplicialGraph) -> Result<Self> {
        let edge_set: BTreeSet<(usize, usize)> = graph.e2.iter().copied().collect();
        let edges = unique_triangle_edges(&graph.e3);
        for e in &edges {
            if !edge_set.contains(e) {
                return Err(Error::Structural(format!("triangle edge ({}, {}) missing from the edge set", e.0, e.1)));
            }
        }
        let edge_pos = edges.iter().enumerate().map(|(k, &e)| (e, k)).collect();
        Ok(Self { m: graph.m, edges, edge_pos })
    }

    pub fn p2_tilde(&self) -> usize {
        self.edges.len()
    }

    pub fn t_dim(&self) -> usize {
        self.m + self.edges.len()
    }

    pub fn u_dim(&self) -> usize {
        3 * self.m + 1 + 6 * self.edges.len()
    }

    /// Position of an edge among the unique triangle edges.
    pub fn edge_position(&self, j: usize, q: usize) -> Result<usize> {
        let key = (j.min(q), j.max(q));
        self.edge_pos
            .get(&key)
            .copied()
            .ok_or_else(|| Error::Structural(format!("no lift slot for edge ({}, {})", key.0, key.1)))
    }

    /// Row of the monomial `δ_j δ_q` in T.
    pub fn edge_slot(&self, j: usize, q: usize) -> Result<usize> {
        Ok(self.m + self.edge_position(j, q)?)
    }

    /// Rows `(a1, a2, a3)` for edges `(j,q)`, `(q,r)`, `(j,r)`.
    pub fn omega(&self, j: usize, q: usize, r: usize) -> Result<[usize; 3]> {
        Ok([self.edge_slot(j, q)?, self.edge_slot(q, r)?, self.edge_slot(j, r)?])
    }

    /// First row of the six-row theta block of edge `(j,q)` in U.
    pub fn theta_slot(&self, j: usize, q: usize) -> Result<usize> {
        Ok(3 * self.m + 1 + 6 * self.edge_position(j, q)?)
    }

    /// Theta rows of edges `(j,q)`, `(q,r)`, `(j,r)` in that order.
    pub fn rho(&self, j: usize, q: usize, r: usize) -> Result<[usize; 18]> {
        let mut out = [0; 18];
        for (b, (a, c)) in [(j, q), (q, r), (j, r)].into_iter().enumerate() {
            let base = self.theta_slot(a, c)?;
            for t in 0..6 {
                out[6 * b + t] = base + t;
            }
        }
        Ok(out)
    }

    /// Row in U of the monomial `coord(a, ca) * coord(b, cb)` for distinct points on a lift edge.
    pub fn theta_index(&self, a: usize, ca: usize, b: usize, cb: usize) -> Result<usize> {
        if ca == cb || a == b {
            return Err(Error::Structural(format!(
                "monomial ({a},{ca})x({b},{cb}) is not part of a theta block"
            )));
        }
        let (lo, clo, chi) = if a < b { (a, ca, cb) } else { (b, cb, ca) };
        let hi = a.max(b);
        let t = THETA_PAIRS.iter().position(|&p| p == (clo, chi)).expect("distinct coordinates");
        Ok(self.theta_slot(lo, hi)? + t)
    }

    /// Edge and theta entry of a U row, the inverse of `theta_index`.
    pub fn theta_monomial(&self, row: usize) -> Option<((usize, usize), usize)> {
        let base = 3 * self.m + 1;
        if row < base {
            return None;
        }
        let k = (row - base) / 6;
        self.edges.get(k).map(|&e| (e, (row - base) % 6))
    }
}

/// Row in U of coordinate `c` of point `j`.
pub fn point_row(j: usize, c: usize) -> usize {
    1 + 3 * j + c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(ma: usize, mb: usize) -> Vec<Vector2<f64>> {
        let mut v = Vec::new();
        for a in 0..ma {
            for b in 0..mb {
                v.push(Vector2::new(b as f64, a as f64));
            }
        }
        v
    }

    #[test]
    fn three_points_complete() {
        let pts = vec![Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)];
        let e2 = build_e2(&pts, 2).unwrap();
        assert_eq!(e2, vec![(0, 1), (0, 2), (1, 2)]);
        let e3 = build_e3(&e2, &pts, E3Mode::All);
        assert_eq!(e3, vec![(0, 1, 2)]);
    }

    #[test]
    fn four_cycle_has_no_triangles() {
        let pts = grid(2, 2);
        let e3 = build_e3(&[(0, 1), (1, 3), (2, 3), (0, 2)], &pts, E3Mode::All);
        assert!(e3.is_empty());
    }

    #[test]
    fn complete_five() {
        let pts: Vec<_> = (0..5)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 5.0;
                Vector2::new(t.cos(), t.sin())
            })
            .collect();
        let e2: Vec<_> = (0..5).flat_map(|a| (a + 1..5).map(move |b| (a, b))).collect();
        let g = SimplicialGraph::new(5, e2.clone(), build_e3(&e2, &pts, E3Mode::All)).unwrap();
        assert_eq!(g.p2(), 10);
        assert_eq!(g.p2_tilde, 10);
    }

    #[test]
    fn duplicate_points_rejected() {
        let pts = vec![Vector2::new(0.0, 0.0), Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0)];
        assert!(matches!(build_e2(&pts, 1), Err(Error::DuplicatePoints(0, 1))));
    }

    #[test]
    fn grid_degree() {
        let pts = grid(4, 4);
        let e2 = build_e2(&pts, 4).unwrap();
        let mut deg = [0; 16];
        for (a, b) in e2 {
            deg[a] += 1;
            deg[b] += 1;
        }
        assert!(deg.iter().all(|&d| d >= 4));
    }

    #[test]
    fn lift_sizes_and_slots() {
        let g = SimplicialGraph::new(3, vec![(0, 1), (0, 2), (1, 2)], vec![(0, 1, 2)]).unwrap();
        let maps = LiftIndexMaps::new(&g).unwrap();
        assert_eq!(maps.t_dim(), 6);
        assert_eq!(maps.u_dim(), 28);
        let g4 = SimplicialGraph::new(4, vec![(0, 1), (0, 2), (1, 2), (2, 3)], vec![(0, 1, 2)]).unwrap();
        let maps4 = LiftIndexMaps::new(&g4).unwrap();
        // (j,q), (q,r), (j,r) with sorted edges (0,1)->4, (0,2)->5, (1,2)->6
        assert_eq!(maps4.omega(0, 1, 2).unwrap(), [4, 6, 5]);
        let g_empty = SimplicialGraph::new(4, vec![(0, 1)], vec![]).unwrap();
        assert_eq!(LiftIndexMaps::new(&g_empty).unwrap().t_dim(), 4);
    }

    #[test]
    fn theta_roundtrip() {
        let g = SimplicialGraph::new(4, vec![(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)], vec![(0, 1, 2), (1, 2, 3)])
            .unwrap();
        let maps = LiftIndexMaps::new(&g).unwrap();
        for &(j, q) in &maps.edges {
            for (t, &(c1, c2)) in THETA_PAIRS.iter().enumerate() {
                let row = maps.theta_index(q, c2, j, c1).unwrap();
                assert_eq!(row, maps.theta_slot(j, q).unwrap() + t);
                assert_eq!(maps.theta_monomial(row), Some(((j, q), t)));
            }
        }
    }

    #[test]
    fn missing_edge_is_structural_error() {
        assert!(matches!(
            SimplicialGraph::new(3, vec![(0, 1), (1, 2)], vec![(0, 1, 2)]),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn per_edge_cap_limits_usage() {
        let pts = grid(4, 4);
        let e2 = build_e2(&pts, 6).unwrap();
        let e3 = build_e3(&e2, &pts, E3Mode::PerEdgeCap(2));
        let mut count = HashMap::new();
        for t in &e3 {
            for e in [(t.0, t.1), (t.1, t.2), (t.0, t.2)] {
                *count.entry(e).or_insert(0) += 1;
            }
        }
        assert!(count.values().all(|&c| c <= 2));
        let adaptive = build_e3(&e2, &pts, E3Mode::Adaptive);
        assert!(slots_connected(&adaptive));
    }
}
