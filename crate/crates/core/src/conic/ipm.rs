//! Homogeneous self-dual interior-point method with Nesterov-Todd scaling.
//!
//! The program is kept in primal standard form `min <c,x>` s.t. `Ax = b`,
//! `x` in a product of PSD, second-order, nonnegative and free cones. Each
//! iteration forms the Schur complement `A H A^T` of the scaled normal
//! equations, handles free variables through a small augmented system and
//! takes a Mehrotra predictor-corrector step on the embedding.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU, SVD};
use serde::{Deserialize, Serialize};

use super::program::{ConicProgram, PrimalPoint, VarBlock};
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Relative residual tolerance for primal, dual and gap measures.
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_factor: f64,
    /// Normalize constraint rows and the scale of `b` and `c`.
    pub equilibrate: bool,
    /// Iterative refinement passes on each Newton system.
    pub refine_steps: usize,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: tol::SOLVER_TOL, max_iter: tol::SOLVER_MAX_ITER, step_factor: 0.99, equilibrate: true, refine_steps: 2, verbose: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub primal: PrimalPoint,
    /// Dual cone variables, same layout as the primal point (free pool is zero).
    pub dual_slack: PrimalPoint,
    /// One multiplier per equality row.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    /// Smallest eigenvalue of each primal PSD block.
    pub min_eigenvalues: Vec<f64>,
    pub message: String,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

// ---------------------------------------------------------------------------
// problem data

#[derive(Clone)]
struct PsdRow {
    row: usize,
    upper: Vec<(usize, usize, f64)>,
    expanded: Vec<(usize, usize, f64)>,
}

#[derive(Clone)]
struct PsdData {
    dim: usize,
    rows: Vec<PsdRow>,
    c: DMatrix<f64>,
}

#[derive(Clone)]
struct VecData {
    dim: usize,
    rows: Vec<(usize, Vec<(usize, f64)>)>,
    cols: Vec<Vec<(usize, f64)>>,
    c: DVector<f64>,
}

#[derive(Clone)]
struct Data {
    nrows: usize,
    psd: Vec<PsdData>,
    soc: Vec<VecData>,
    lp: VecData,
    free: VecData,
    b: DVector<f64>,
    obj_const: f64,
}

/// Iterate container shared by primal, dual and scaled quantities.
#[derive(Clone, Debug)]
struct Cv {
    psd: Vec<DMatrix<f64>>,
    soc: Vec<DVector<f64>>,
    lp: DVector<f64>,
    free: DVector<f64>,
}

impl Cv {
    fn zeros(d: &Data) -> Self {
        Self {
            psd: d.psd.iter().map(|p| DMatrix::zeros(p.dim, p.dim)).collect(),
            soc: d.soc.iter().map(|s| DVector::zeros(s.dim)).collect(),
            lp: DVector::zeros(d.lp.dim),
            free: DVector::zeros(d.free.dim),
        }
    }

    fn identity(d: &Data) -> Self {
        let mut e = Self::zeros(d);
        for x in e.psd.iter_mut() {
            x.fill_with_identity();
        }
        for x in e.soc.iter_mut() {
            x[0] = 1.0;
        }
        e.lp.fill(1.0);
        e
    }

    fn dot(&self, o: &Cv) -> f64 {
        let mut s = 0.0;
        for (a, b) in self.psd.iter().zip(&o.psd) {
            s += a.dot(b);
        }
        for (a, b) in self.soc.iter().zip(&o.soc) {
            s += a.dot(b);
        }
        s + self.lp.dot(&o.lp) + self.free.dot(&o.free)
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn axpy(&mut self, a: f64, o: &Cv) {
        for (x, y) in self.psd.iter_mut().zip(&o.psd) {
            *x += y * a;
        }
        for (x, y) in self.soc.iter_mut().zip(&o.soc) {
            x.axpy(a, y, 1.0);
        }
        self.lp.axpy(a, &o.lp, 1.0);
        self.free.axpy(a, &o.free, 1.0);
    }

    fn scale(&mut self, a: f64) {
        for x in self.psd.iter_mut() {
            *x *= a;
        }
        for x in self.soc.iter_mut() {
            *x *= a;
        }
        self.lp *= a;
        self.free *= a;
    }

    fn scaled(&self, a: f64) -> Cv {
        let mut c = self.clone();
        c.scale(a);
        c
    }

    fn without_free(mut self) -> Cv {
        self.free.fill(0.0);
        self
    }

    fn symmetrize(&mut self) {
        for x in self.psd.iter_mut() {
            let t = x.transpose();
            *x += t;
            *x *= 0.5;
        }
    }
}

fn expand(upper: &[(usize, usize, f64)]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(2 * upper.len());
    for &(r, c, v) in upper {
        if r == c {
            out.push((r, r, v));
        } else {
            out.push((r, c, 0.5 * v));
            out.push((c, r, 0.5 * v));
        }
    }
    out
}

impl Data {
    fn from_program(prog: &ConicProgram) -> Self {
        let nrows = prog.constraints.len();
        let mut psd_rows: Vec<BTreeMap<usize, BTreeMap<(usize, usize), f64>>> =
            vec![BTreeMap::new(); prog.psd_blocks.len()];
        let mut soc_rows: Vec<BTreeMap<usize, BTreeMap<usize, f64>>> = vec![BTreeMap::new(); prog.soc_blocks.len()];
        let mut lp_rows: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
        let mut free_rows: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
        let mut b = DVector::zeros(nrows);
        for (i, con) in prog.constraints.iter().enumerate() {
            let mut rhs = con.rhs;
            for f in &con.terms {
                rhs -= f.constant;
                for &(r, c, v) in &f.entries {
                    let (r, c) = if r <= c { (r, c) } else { (c, r) };
                    match f.block {
                        VarBlock::Psd(k) => {
                            *psd_rows[k].entry(i).or_default().entry((r, c)).or_insert(0.0) += v;
                        }
                        VarBlock::Soc(k) => *soc_rows[k].entry(i).or_default().entry(r).or_insert(0.0) += v,
                        VarBlock::NonNeg => *lp_rows.entry(i).or_default().entry(r).or_insert(0.0) += v,
                        VarBlock::Free => *free_rows.entry(i).or_default().entry(r).or_insert(0.0) += v,
                    }
                }
            }
            b[i] = rhs;
        }
        let mut obj_const = 0.0;
        let mut psd_c: Vec<DMatrix<f64>> = prog.psd_blocks.iter().map(|p| DMatrix::zeros(p.dim, p.dim)).collect();
        let mut soc_c: Vec<DVector<f64>> = prog.soc_blocks.iter().map(|p| DVector::zeros(p.dim)).collect();
        let mut lp_c = DVector::zeros(prog.nonneg_vars);
        let mut free_c = DVector::zeros(prog.free_vars);
        for f in &prog.objective {
            obj_const += f.constant;
            for &(r, c, v) in &f.entries {
                match f.block {
                    VarBlock::Psd(k) => {
                        if r == c {
                            psd_c[k][(r, r)] += v;
                        } else {
                            psd_c[k][(r, c)] += 0.5 * v;
                            psd_c[k][(c, r)] += 0.5 * v;
                        }
                    }
                    VarBlock::Soc(k) => soc_c[k][r] += v,
                    VarBlock::NonNeg => lp_c[r] += v,
                    VarBlock::Free => free_c[r] += v,
                }
            }
        }
        let psd = prog
            .psd_blocks
            .iter()
            .zip(psd_rows)
            .zip(psd_c)
            .map(|((info, rows), c)| PsdData {
                dim: info.dim,
                rows: rows
                    .into_iter()
                    .map(|(row, ent)| {
                        let upper: Vec<_> = ent.into_iter().filter(|e| e.1 != 0.0).map(|((r, c), v)| (r, c, v)).collect();
                        PsdRow { row, expanded: expand(&upper), upper }
                    })
                    .filter(|r| !r.upper.is_empty())
                    .collect(),
                c,
            })
            .collect();
        let vec_data = |dim: usize, rows: BTreeMap<usize, BTreeMap<usize, f64>>, c: DVector<f64>| {
            let rows: Vec<(usize, Vec<(usize, f64)>)> = rows
                .into_iter()
                .map(|(i, ent)| (i, ent.into_iter().filter(|e| e.1 != 0.0).collect::<Vec<_>>()))
                .filter(|r| !r.1.is_empty())
                .collect();
            let mut cols = vec![Vec::new(); dim];
            for (i, ent) in &rows {
                for &(l, v) in ent {
                    cols[l].push((*i, v));
                }
            }
            VecData { dim, rows, cols, c }
        };
        let soc = prog
            .soc_blocks
            .iter()
            .zip(soc_rows)
            .zip(soc_c)
            .map(|((info, rows), c)| vec_data(info.dim, rows, c))
            .collect();
        Data {
            nrows,
            psd,
            soc,
            lp: vec_data(prog.nonneg_vars, lp_rows, lp_c),
            free: vec_data(prog.free_vars, free_rows, free_c),
            b,
            obj_const,
        }
    }

    fn row_norms(&self) -> DVector<f64> {
        let mut n2 = DVector::zeros(self.nrows);
        for p in &self.psd {
            for r in &p.rows {
                n2[r.row] += r.expanded.iter().map(|e| e.2 * e.2).sum::<f64>();
            }
        }
        for v in self.soc.iter().chain([&self.lp, &self.free]) {
            for (i, ent) in &v.rows {
                n2[*i] += ent.iter().map(|e| e.1 * e.1).sum::<f64>();
            }
        }
        n2.map(f64::sqrt)
    }

    fn scale_rows(&mut self, d: &DVector<f64>) {
        for p in self.psd.iter_mut() {
            for r in p.rows.iter_mut() {
                let s = d[r.row];
                r.upper.iter_mut().for_each(|e| e.2 *= s);
                r.expanded.iter_mut().for_each(|e| e.2 *= s);
            }
        }
        for v in self.soc.iter_mut().chain([&mut self.lp, &mut self.free]) {
            for (i, ent) in v.rows.iter_mut() {
                ent.iter_mut().for_each(|e| e.1 *= d[*i]);
            }
            for col in v.cols.iter_mut() {
                col.iter_mut().for_each(|e| e.1 *= d[e.0]);
            }
        }
        self.b.component_mul_assign(d);
    }

    fn scale_objective(&mut self, s: f64) {
        for p in self.psd.iter_mut() {
            p.c *= s;
        }
        for v in self.soc.iter_mut().chain([&mut self.lp, &mut self.free]) {
            v.c *= s;
        }
    }

    fn c_cv(&self) -> Cv {
        Cv {
            psd: self.psd.iter().map(|p| p.c.clone()).collect(),
            soc: self.soc.iter().map(|s| s.c.clone()).collect(),
            lp: self.lp.c.clone(),
            free: self.free.c.clone(),
        }
    }

    fn a_mul(&self, x: &Cv) -> DVector<f64> {
        let mut out = DVector::zeros(self.nrows);
        for (p, xk) in self.psd.iter().zip(&x.psd) {
            for r in &p.rows {
                out[r.row] += r.upper.iter().map(|&(a, b, v)| v * xk[(a, b)]).sum::<f64>();
            }
        }
        let vecs = self.soc.iter().zip(x.soc.iter()).chain([(&self.lp, &x.lp), (&self.free, &x.free)]);
        for (v, xk) in vecs {
            for (i, ent) in &v.rows {
                out[*i] += ent.iter().map(|&(l, c)| c * xk[l]).sum::<f64>();
            }
        }
        out
    }

    fn at_mul(&self, y: &DVector<f64>) -> Cv {
        let mut out = Cv::zeros(self);
        for (p, zk) in self.psd.iter().zip(out.psd.iter_mut()) {
            for r in &p.rows {
                let yi = y[r.row];
                for &(a, b, v) in &r.expanded {
                    zk[(a, b)] += yi * v;
                }
            }
        }
        let vecs = self.soc.iter().zip(out.soc.iter_mut()).chain([(&self.lp, &mut out.lp), (&self.free, &mut out.free)]);
        for (v, zk) in vecs {
            for (i, ent) in &v.rows {
                for &(l, c) in ent {
                    zk[l] += y[*i] * c;
                }
            }
        }
        out
    }

    fn nu(&self) -> f64 {
        (self.psd.iter().map(|p| p.dim).sum::<usize>() + self.soc.len() + self.lp.dim) as f64
    }
}

// ---------------------------------------------------------------------------
// Nesterov-Todd scaling

struct PsdScale {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
    lam: DVector<f64>,
    g: DMatrix<f64>,
}

struct SocScale {
    w: DMatrix<f64>,
    winv: DMatrix<f64>,
    lam: DVector<f64>,
}

struct Scaling {
    psd: Vec<PsdScale>,
    soc: Vec<SocScale>,
    lp_d: DVector<f64>,
    lp_lam: DVector<f64>,
}

fn chol_lower(x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(c) = Cholesky::new(x.clone()) {
        return Some(c.unpack());
    }
    let n = x.nrows();
    let scale = x.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
    let mut jitter = 1e-15 * scale;
    for _ in 0..6 {
        let y = x + DMatrix::identity(n, n) * jitter;
        if let Some(c) = Cholesky::new(y) {
            return Some(c.unpack());
        }
        jitter *= 100.0;
    }
    None
}

fn soc_j(v: &DVector<f64>) -> f64 {
    v[0] * v[0] - v.rows(1, v.len() - 1).norm_squared()
}

impl Scaling {
    fn compute(x: &Cv, z: &Cv) -> Option<Scaling> {
        let mut psd = Vec::with_capacity(x.psd.len());
        for (xk, zk) in x.psd.iter().zip(&z.psd) {
            let l1 = chol_lower(xk)?;
            let l2 = chol_lower(zk)?;
            let prod = l2.transpose() * &l1;
            let svd = SVD::new(prod, true, true);
            let u = svd.u?;
            let vt = svd.v_t?;
            let s = svd.singular_values;
            if s.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return None;
            }
            let n = s.len();
            let mut r = l1 * vt.transpose();
            let mut rinv = u.transpose() * l2.transpose();
            for k in 0..n {
                let f = s[k].sqrt();
                r.column_mut(k).scale_mut(1.0 / f);
                rinv.row_mut(k).scale_mut(1.0 / f);
            }
            let g = &r * r.transpose();
            psd.push(PsdScale { r, rinv, lam: s, g });
        }
        let mut soc = Vec::with_capacity(x.soc.len());
        for (xk, zk) in x.soc.iter().zip(&z.soc) {
            let jx = soc_j(xk);
            let jz = soc_j(zk);
            if !(jx > 0.0 && jz > 0.0 && xk[0] > 0.0 && zk[0] > 0.0) {
                return None;
            }
            let xb = xk / jx.sqrt();
            let zb = zk / jz.sqrt();
            let gamma = ((1.0 + xb.dot(&zb)) / 2.0).sqrt();
            let n = xk.len();
            let mut wb = DVector::zeros(n);
            wb[0] = (xb[0] + zb[0]) / (2.0 * gamma);
            for k in 1..n {
                wb[k] = (xb[k] - zb[k]) / (2.0 * gamma);
            }
            let beta = (jx / jz).powf(0.25);
            let w1 = wb.rows(1, n - 1).into_owned();
            let mut w = DMatrix::zeros(n, n);
            let mut winv = DMatrix::zeros(n, n);
            w[(0, 0)] = wb[0];
            winv[(0, 0)] = wb[0];
            for k in 1..n {
                w[(0, k)] = w1[k - 1];
                w[(k, 0)] = w1[k - 1];
                winv[(0, k)] = -w1[k - 1];
                winv[(k, 0)] = -w1[k - 1];
            }
            let outer = &w1 * w1.transpose() / (1.0 + wb[0]);
            for a in 1..n {
                for b in 1..n {
                    let v = outer[(a - 1, b - 1)] + if a == b { 1.0 } else { 0.0 };
                    w[(a, b)] = v;
                    winv[(a, b)] = v;
                }
            }
            w *= beta;
            winv /= beta;
            let lam = &w * zk;
            soc.push(SocScale { w, winv, lam });
        }
        if x.lp.iter().chain(z.lp.iter()).any(|&v| !(v > 0.0)) {
            return None;
        }
        let lp_d = x.lp.zip_map(&z.lp, |a, b| (a / b).sqrt());
        let lp_lam = x.lp.zip_map(&z.lp, |a, b| (a * b).sqrt());
        Some(Scaling { psd, soc, lp_d, lp_lam })
    }

    /// `H v = W^T W v` on the cone part.
    fn h(&self, v: &Cv) -> Cv {
        let mut out = v.clone();
        for (o, s) in out.psd.iter_mut().zip(&self.psd) {
            *o = &s.g * &*o * &s.g;
        }
        for (o, s) in out.soc.iter_mut().zip(&self.soc) {
            *o = &s.w * (&s.w * &*o);
        }
        out.lp.component_mul_assign(&self.lp_d);
        out.lp.component_mul_assign(&self.lp_d);
        out.free.fill(0.0);
        out
    }

    /// `W^T u` for a scaled-space vector.
    fn wt(&self, u: &Cv) -> Cv {
        let mut out = u.clone();
        for (o, s) in out.psd.iter_mut().zip(&self.psd) {
            *o = &s.r * &*o * s.r.transpose();
        }
        for (o, s) in out.soc.iter_mut().zip(&self.soc) {
            *o = &s.w * &*o;
        }
        out.lp.component_mul_assign(&self.lp_d);
        out.free.fill(0.0);
        out
    }

    /// Primal direction in scaled space, `W^{-T} dx`.
    fn scale_x(&self, dx: &Cv) -> Cv {
        let mut out = dx.clone();
        for (o, s) in out.psd.iter_mut().zip(&self.psd) {
            *o = &s.rinv * &*o * s.rinv.transpose();
        }
        for (o, s) in out.soc.iter_mut().zip(&self.soc) {
            *o = &s.winv * &*o;
        }
        out.lp.component_div_assign(&self.lp_d);
        out.free.fill(0.0);
        out
    }

    /// Dual direction in scaled space, `W dz`.
    fn scale_z(&self, dz: &Cv) -> Cv {
        let mut out = dz.clone();
        for (o, s) in out.psd.iter_mut().zip(&self.psd) {
            *o = s.r.transpose() * &*o * &s.r;
        }
        for (o, s) in out.soc.iter_mut().zip(&self.soc) {
            *o = &s.w * &*o;
        }
        out.lp.component_mul_assign(&self.lp_d);
        out.free.fill(0.0);
        out
    }

    fn lambda(&self, d: &Data) -> Cv {
        let mut out = Cv::zeros(d);
        for (o, s) in out.psd.iter_mut().zip(&self.psd) {
            o.set_diagonal(&s.lam);
        }
        for (o, s) in out.soc.iter_mut().zip(&self.soc) {
            o.copy_from(&s.lam);
        }
        out.lp.copy_from(&self.lp_lam);
        out
    }

    /// Solves `lambda o u = r` in the Jordan algebra.
    fn lam_div(&self, r: &Cv) -> Cv {
        let mut out = r.clone();
        for (o, s) in out.psd.iter_mut().zip(&self.psd) {
            let n = s.lam.len();
            for a in 0..n {
                for b in 0..n {
                    o[(a, b)] *= 2.0 / (s.lam[a] + s.lam[b]);
                }
            }
        }
        for (o, s) in out.soc.iter_mut().zip(&self.soc) {
            let l = &s.lam;
            let n = l.len();
            let rr = o.clone();
            let l1 = l.rows(1, n - 1);
            let r1 = rr.rows(1, n - 1);
            let det = l[0] * l[0] - l1.norm_squared();
            let u0 = (l[0] * rr[0] - l1.dot(&r1)) / det;
            o[0] = u0;
            for k in 1..n {
                o[k] = (rr[k] - u0 * l[k]) / l[0];
            }
        }
        out.lp.component_div_assign(&self.lp_lam);
        out.free.fill(0.0);
        out
    }
}

fn jordan(u: &Cv, v: &Cv) -> Cv {
    let mut out = u.clone();
    for (o, (a, b)) in out.psd.iter_mut().zip(u.psd.iter().zip(&v.psd)) {
        let ab = a * b;
        *o = (&ab + ab.transpose()) * 0.5;
    }
    for (o, (a, b)) in out.soc.iter_mut().zip(u.soc.iter().zip(&v.soc)) {
        let n = a.len();
        o[0] = a.dot(b);
        for k in 1..n {
            o[k] = a[0] * b[k] + b[0] * a[k];
        }
    }
    out.lp = u.lp.component_mul(&v.lp);
    out.free.fill(0.0);
    out
}

/// Largest `alpha` with `lam + alpha * d` in the cone (capped at `cap`).
fn max_step(sc: &Scaling, d: &Cv, cap: f64) -> f64 {
    let mut alpha = cap;
    for (s, dk) in sc.psd.iter().zip(&d.psd) {
        let n = s.lam.len();
        let mut m = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                m[(a, b)] = 0.5 * (dk[(a, b)] + dk[(b, a)]) / (s.lam[a] * s.lam[b]).sqrt();
            }
        }
        let e = m.symmetric_eigenvalues().min();
        if e < 0.0 {
            alpha = alpha.min(-1.0 / e);
        }
    }
    for (s, dk) in sc.soc.iter().zip(&d.soc) {
        alpha = alpha.min(soc_step(&s.lam, dk));
    }
    for (l, dl) in sc.lp_lam.iter().zip(d.lp.iter()) {
        if *dl < 0.0 {
            alpha = alpha.min(-l / dl);
        }
    }
    alpha
}

fn soc_step(x: &DVector<f64>, d: &DVector<f64>) -> f64 {
    let n = x.len();
    let x1 = x.rows(1, n - 1);
    let d1 = d.rows(1, n - 1);
    let a = d[0] * d[0] - d1.norm_squared();
    let b = x[0] * d[0] - x1.dot(&d1);
    let c = x[0] * x[0] - x1.norm_squared();
    // q(t) = a t^2 + 2 b t + c, need q >= 0 and x0 + t d0 >= 0
    let mut t = f64::INFINITY;
    if d[0] < 0.0 {
        t = t.min(-x[0] / d[0]);
    }
    let disc = b * b - a * c;
    if a.abs() < 1e-300 {
        if b < 0.0 {
            t = t.min(-c / (2.0 * b));
        }
    } else if disc >= 0.0 {
        let sq = disc.sqrt();
        for root in [(-b - sq) / a, (-b + sq) / a] {
            if root > 0.0 {
                t = t.min(root);
            }
        }
    }
    t
}

// ---------------------------------------------------------------------------
// Schur complement

fn light_pair(ei: &[(usize, usize, f64)], ej: &[(usize, usize, f64)], g: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for &(p, q, a) in ei {
        for &(u, t, b) in ej {
            s += a * b * g[(p, u)] * g[(t, q)];
        }
    }
    s
}

fn build_schur(d: &Data, sc: &Scaling) -> DMatrix<f64> {
    let m = d.nrows;
    let mut mm = DMatrix::<f64>::zeros(m, m);
    const LIGHT: usize = 16;
    for (p, s) in d.psd.iter().zip(&sc.psd) {
        let g = &s.g;
        let n = p.dim;
        let heavy: Vec<bool> = p.rows.iter().map(|r| r.expanded.len() > LIGHT).collect();
        for (a, ra) in p.rows.iter().enumerate() {
            if heavy[a] {
                let bmat = if ra.expanded.len() > n {
                    let mut sm = DMatrix::zeros(n, n);
                    for &(u, t, v) in &ra.expanded {
                        sm[(u, t)] += v;
                    }
                    g * sm * g
                } else {
                    let mut bm = DMatrix::zeros(n, n);
                    for &(u, t, v) in &ra.expanded {
                        bm.ger(v, &g.column(u), &g.column(t), 1.0);
                    }
                    bm
                };
                for (b, rb) in p.rows.iter().enumerate() {
                    if heavy[b] && b < a {
                        continue;
                    }
                    let val: f64 = rb.expanded.iter().map(|&(u, t, v)| v * bmat[(u, t)]).sum();
                    mm[(ra.row, rb.row)] += val;
                    if ra.row != rb.row {
                        mm[(rb.row, ra.row)] += val;
                    }
                }
            } else {
                for (b, rb) in p.rows.iter().enumerate().skip(a) {
                    if heavy[b] {
                        continue;
                    }
                    let val = light_pair(&ra.expanded, &rb.expanded, g);
                    mm[(ra.row, rb.row)] += val;
                    if ra.row != rb.row {
                        mm[(rb.row, ra.row)] += val;
                    }
                }
            }
        }
    }
    for (v, s) in d.soc.iter().zip(&sc.soc) {
        let h = &s.w * &s.w;
        let dense: Vec<DVector<f64>> = v
            .rows
            .iter()
            .map(|(_, ent)| {
                let mut a = DVector::zeros(v.dim);
                for &(l, c) in ent {
                    a[l] += c;
                }
                a
            })
            .collect();
        for (a, (ra, _)) in v.rows.iter().enumerate() {
            let ha = &h * &dense[a];
            for (b, (rb, _)) in v.rows.iter().enumerate().skip(a) {
                let val = ha.dot(&dense[b]);
                mm[(*ra, *rb)] += val;
                if ra != rb {
                    mm[(*rb, *ra)] += val;
                }
            }
        }
    }
    for (l, col) in d.lp.cols.iter().enumerate() {
        let h = sc.lp_d[l] * sc.lp_d[l];
        for (a, &(ra, va)) in col.iter().enumerate() {
            for &(rb, vb) in col.iter().skip(a) {
                let val = h * va * vb;
                mm[(ra, rb)] += val;
                if ra != rb {
                    mm[(rb, ra)] += val;
                }
            }
        }
    }
    mm
}

/// Factorized reduced KKT system `[M Af; Af^T 0]`.
struct Kkt {
    m: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    af: DMatrix<f64>,
    minv_af: DMatrix<f64>,
    s_lu: Option<LU<f64, Dyn, Dyn>>,
}

impl Kkt {
    fn new(d: &Data, m: DMatrix<f64>) -> Option<Kkt> {
        let n = m.nrows();
        let maxdiag = m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
        let mut reg = 0.0;
        let mut chol = None;
        for _ in 0..8 {
            let mut mr = m.clone();
            for k in 0..n {
                mr[(k, k)] += reg;
            }
            if let Some(c) = Cholesky::new(mr) {
                chol = Some(c);
                break;
            }
            reg = if reg == 0.0 { 1e-15 * maxdiag } else { reg * 100.0 };
        }
        let chol = chol?;
        let nf = d.free.dim;
        let mut af = DMatrix::zeros(n, nf);
        for (i, ent) in &d.free.rows {
            for &(l, c) in ent {
                af[(*i, l)] += c;
            }
        }
        let (minv_af, s_lu) = if nf > 0 {
            let minv_af = chol.solve(&af);
            let mut s = af.transpose() * &minv_af;
            let sd = s.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
            for k in 0..nf {
                s[(k, k)] += 1e-14 * sd;
            }
            (minv_af, Some(LU::new(s)))
        } else {
            (DMatrix::zeros(n, 0), None)
        };
        Some(Kkt { m, chol, af, minv_af, s_lu })
    }

    fn solve_once(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let minv_r1 = self.chol.solve(r1);
        match &self.s_lu {
            None => (minv_r1, DVector::zeros(0)),
            Some(lu) => {
                let rhs = self.af.transpose() * &minv_r1 - r2;
                let v = lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(rhs.len()));
                let dy = minv_r1 - &self.minv_af * &v;
                (dy, v)
            }
        }
    }

    fn solve(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (mut dy, mut v) = self.solve_once(r1, r2);
        let scale = r1.norm() + r2.norm();
        for _ in 0..3 {
            let e1 = r1 - &self.m * &dy - &self.af * &v;
            let e2 = r2 - self.af.transpose() * &dy;
            if e1.norm() + e2.norm() <= 1e-15 * scale.max(1e-300) {
                break;
            }
            let (cy, cv) = self.solve_once(&e1, &e2);
            dy += cy;
            v += cv;
        }
        (dy, v)
    }
}

// ---------------------------------------------------------------------------
// main loop

struct Dir {
    dx: Cv,
    dy: DVector<f64>,
    dz: Cv,
    dtau: f64,
    dkappa: f64,
}

struct Unscale {
    row: DVector<f64>,
    sb: f64,
    sc: f64,
}

struct Report {
    residuals: Residuals,
    pobj: f64,
    dobj: f64,
}

fn evaluate(orig: &Data, x: &Cv, y: &DVector<f64>, z: &Cv) -> Report {
    let ax = orig.a_mul(x);
    let aty = orig.at_mul(y);
    let c = orig.c_cv();
    let pres = (&ax - &orig.b).norm() / (1.0 + orig.b.norm());
    let mut rd = c.clone();
    rd.axpy(-1.0, &aty);
    rd.axpy(-1.0, z);
    let dres = rd.norm() / (1.0 + c.norm());
    let pobj = c.dot(x) + orig.obj_const;
    let dobj = orig.b.dot(y) + orig.obj_const;
    let denom = 1.0 + pobj.abs() + dobj.abs();
    let gap = ((pobj - dobj).abs() / denom).max(x.dot(z).abs() / denom);
    Report { residuals: Residuals { primal: pres, dual: dres, gap }, pobj, dobj }
}

fn to_primal_point(prog: &ConicProgram, x: &Cv) -> PrimalPoint {
    let mut p = PrimalPoint::zeros(prog);
    p.psd = x.psd.clone();
    p.soc = x.soc.clone();
    p.nonneg = x.lp.clone();
    p.free = x.free.clone();
    p
}

/// Solves the program with the embedded interior-point method.
pub fn solve(prog: &ConicProgram, settings: &SolverSettings) -> crate::error::Result<ConicSolution> {
    prog.validate()?;
    let orig = Data::from_program(prog);
    let mut d = orig.clone();
    let nrows = d.nrows;
    let mut un = Unscale { row: DVector::from_element(nrows, 1.0), sb: 1.0, sc: 1.0 };
    if settings.equilibrate {
        let norms = d.row_norms();
        let row = norms.map(|v| if v > 0.0 { 1.0 / v } else { 1.0 });
        d.scale_rows(&row);
        un.row = row;
        un.sb = 1.0 / d.b.norm().max(1.0);
        d.b *= un.sb;
        un.sc = 1.0 / d.c_cv().norm().max(1.0);
        d.scale_objective(un.sc);
    }
    let c = d.c_cv();
    let nu = d.nu();
    let mut x = Cv::identity(&d);
    let mut z = Cv::identity(&d);
    let mut y = DVector::zeros(nrows);
    let (mut tau, mut kappa) = (1.0f64, 1.0f64);

    let unscale = |x: &Cv, y: &DVector<f64>, z: &Cv, tau: f64| -> (Cv, DVector<f64>, Cv) {
        let xo = x.scaled(1.0 / (tau * un.sb));
        let yo = y.component_mul(&un.row) / (tau * un.sc);
        let zo = z.scaled(1.0 / (tau * un.sc)).without_free();
        (xo, yo, zo)
    };

    let mut best: Option<(f64, Cv, DVector<f64>, Cv, Report)> = None;
    let mut status = SolveStatus::MaxIter;
    let mut message = String::from("iteration limit reached");
    let mut iterations = 0;
    let mut stall = 0;

    for iter in 0..=settings.max_iter {
        iterations = iter;
        let (xo, yo, zo) = unscale(&x, &y, &z, tau);
        let rep = evaluate(&orig, &xo, &yo, &zo);
        if settings.verbose {
            eprintln!(
                "it {:3} pobj {:+.8e} dobj {:+.8e} pres {:.2e} dres {:.2e} gap {:.2e} tau {:.2e} kappa {:.2e}",
                iter, rep.pobj, rep.dobj, rep.residuals.primal, rep.residuals.dual, rep.residuals.gap, tau, kappa
            );
        }
        let score = rep.residuals.max();
        if best.as_ref().map_or(true, |b| score < b.0) {
            best = Some((score, xo.clone(), yo.clone(), zo.clone(), rep));
        }
        if score <= settings.tol {
            status = SolveStatus::Optimal;
            message = "converged".into();
            break;
        }
        // infeasibility certificates from the unnormalized rays
        if kappa > tau {
            let yr = y.component_mul(&un.row);
            let by = orig.b.dot(&yr);
            if by > 0.0 {
                let mut r = orig.at_mul(&yr);
                r.axpy(1.0, &z.clone().without_free());
                if r.norm() / by <= settings.tol {
                    status = SolveStatus::Infeasible;
                    message = "primal infeasibility certificate found".into();
                    break;
                }
            }
            let cx = orig.c_cv().dot(&x);
            if cx < 0.0 {
                let ax = orig.a_mul(&x);
                if ax.norm() / (-cx) <= settings.tol {
                    status = SolveStatus::Unbounded;
                    message = "dual infeasibility certificate found".into();
                    break;
                }
            }
        }
        if iter == settings.max_iter {
            break;
        }

        let Some(sc) = Scaling::compute(&x, &z) else {
            message = "scaling breakdown".into();
            break;
        };
        let Some(kkt) = Kkt::new(&d, build_schur(&d, &sc)) else {
            message = "Schur complement factorization failed".into();
            break;
        };
        let lam = sc.lambda(&d);
        let mu = (lam.dot(&lam) + tau * kappa) / (nu + 1.0);

        // residuals of the embedding
        let r_p = &d.b * tau - d.a_mul(&x);
        let mut r_d = c.scaled(tau);
        r_d.axpy(-1.0, &d.at_mul(&y));
        r_d.axpy(-1.0, &z.clone().without_free());
        let r_g = d.b.dot(&y) - c.dot(&x) - kappa;

        // direction for the tau column
        let ck = c.clone().without_free();
        let hc = sc.h(&ck);
        let rhs2 = &d.b + d.a_mul(&hc);
        let (u2, v2) = kkt.solve(&rhs2, &c.free);
        let mut dz2 = ck.clone();
        dz2.axpy(-1.0, &d.at_mul(&u2).without_free());
        let mut dx2 = sc.h(&dz2).scaled(-1.0);
        dx2.free = v2;
        let denom = c.dot(&dx2) - d.b.dot(&u2) - kappa / tau;

        // Newton system in the form
        //   A dx - b dtau = rp, A'dy + dz - c dtau = rd, dx + H dz = q,
        //   c.dx - b.dy + dkappa = rg, kappa dtau + tau dkappa = rtk
        let solve_lin = |rp: &DVector<f64>, rd: &Cv, q: &Cv, rg: f64, rtk: f64| -> Dir {
            let r_dk = rd.clone().without_free();
            let mut t = q.clone().without_free();
            t.axpy(-1.0, &sc.h(&r_dk));
            let rhs1 = rp - d.a_mul(&t);
            let (u1, v1) = kkt.solve(&rhs1, &rd.free);
            let mut dz1 = r_dk;
            dz1.axpy(-1.0, &d.at_mul(&u1).without_free());
            let mut dx1 = q.clone().without_free();
            dx1.axpy(-1.0, &sc.h(&dz1));
            dx1.free = v1;
            let num = rg - c.dot(&dx1) + d.b.dot(&u1) - rtk / tau;
            let dtau = num / denom;
            let mut dx = dx1;
            dx.axpy(dtau, &dx2);
            let mut dz = dz1;
            dz.axpy(dtau, &dz2);
            let dy = &u1 + &u2 * dtau;
            let dkappa = (rtk - kappa * dtau) / tau;
            let mut dir = Dir { dx, dy, dz, dtau, dkappa };
            dir.dx.symmetrize();
            dir.dz.symmetrize();
            dir
        };
        let lin_residual = |dir: &Dir, rp: &DVector<f64>, rd: &Cv, q: &Cv, rg: f64, rtk: f64| {
            let ep = rp - d.a_mul(&dir.dx) + &d.b * dir.dtau;
            let mut ed = rd.clone();
            ed.axpy(-1.0, &d.at_mul(&dir.dy));
            ed.axpy(-1.0, &dir.dz.clone().without_free());
            ed.axpy(dir.dtau, &c);
            let mut eq = q.clone().without_free();
            eq.axpy(-1.0, &dir.dx.clone().without_free());
            eq.axpy(-1.0, &sc.h(&dir.dz.clone().without_free()));
            let eg = rg - c.dot(&dir.dx) + d.b.dot(&dir.dy) - dir.dkappa;
            let etk = rtk - kappa * dir.dtau - tau * dir.dkappa;
            (ep, ed, eq, eg, etk)
        };
        let solve_dir = |eta: f64, r_c: &Cv, r_tk: f64| -> Dir {
            let q = sc.wt(&sc.lam_div(r_c));
            let rp = &r_p * eta;
            let rd = r_d.scaled(eta);
            let rg = eta * r_g;
            let mut dir = solve_lin(&rp, &rd, &q, rg, r_tk);
            for _ in 0..settings.refine_steps {
                let (ep, ed, eq, eg, etk) = lin_residual(&dir, &rp, &rd, &q, rg, r_tk);
                let corr = solve_lin(&ep, &ed, &eq, eg, etk);
                dir.dx.axpy(1.0, &corr.dx);
                dir.dz.axpy(1.0, &corr.dz);
                dir.dy += &corr.dy;
                dir.dtau += corr.dtau;
                dir.dkappa += corr.dkappa;
            }
            dir
        };
        let step_to_boundary = |dir: &Dir| -> (f64, Cv, Cv) {
            let dxs = sc.scale_x(&dir.dx);
            let dzs = sc.scale_z(&dir.dz);
            let mut a = max_step(&sc, &dxs, f64::INFINITY).min(max_step(&sc, &dzs, f64::INFINITY));
            if dir.dtau < 0.0 {
                a = a.min(-tau / dir.dtau);
            }
            if dir.dkappa < 0.0 {
                a = a.min(-kappa / dir.dkappa);
            }
            (a, dxs, dzs)
        };

        // predictor
        let lam_sq = jordan(&lam, &lam);
        let aff = solve_dir(1.0, &lam_sq.scaled(-1.0), -tau * kappa);
        let (a_aff, dxs, dzs) = step_to_boundary(&aff);
        let a_aff = a_aff.min(1.0);
        let sigma = (1.0 - a_aff).powi(3).clamp(0.0, 1.0);

        // corrector
        let mut r_c = lam_sq.scaled(-1.0);
        r_c.axpy(-1.0, &jordan(&dxs, &dzs));
        r_c.axpy(sigma * mu, &Cv::identity(&d));
        let r_tk = -tau * kappa - aff.dtau * aff.dkappa + sigma * mu;
        let dir = solve_dir(1.0 - sigma, &r_c, r_tk);
        let (a_max, _, _) = step_to_boundary(&dir);
        let alpha = (settings.step_factor * a_max).min(1.0);
        if !alpha.is_finite() || alpha <= 0.0 {
            message = "no progress along search direction".into();
            break;
        }
        if alpha < 1e-8 {
            stall += 1;
            if stall > 5 {
                message = "stalled with tiny steps".into();
                break;
            }
        } else {
            stall = 0;
        }
        x.axpy(alpha, &dir.dx);
        y.axpy(alpha, &dir.dy, 1.0);
        z.axpy(alpha, &dir.dz);
        tau += alpha * dir.dtau;
        kappa += alpha * dir.dkappa;
    }

    let (xo, yo, zo, rep) = match status {
        SolveStatus::Infeasible | SolveStatus::Unbounded => {
            let (xo, yo, zo) = unscale(&x, &y, &z, tau);
            let rep = evaluate(&orig, &xo, &yo, &zo);
            (xo, yo, zo, rep)
        }
        _ => {
            let (_, xo, yo, zo, rep) = best.expect("at least one iterate evaluated");
            (xo, yo, zo, rep)
        }
    };
    let primal = to_primal_point(prog, &xo);
    let dual_slack = to_primal_point(prog, &zo);
    let min_eigenvalues = primal.psd.iter().map(|m| m.clone().symmetric_eigenvalues().min()).collect();
    Ok(ConicSolution {
        status,
        primal,
        dual_slack,
        duals: yo.iter().copied().collect(),
        objective: rep.pobj,
        dual_objective: rep.dobj,
        residuals: rep.residuals,
        iterations,
        min_eigenvalues,
        message,
    })
}
