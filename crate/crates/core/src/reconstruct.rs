//! Reconstruction programs, ground-truth lifts and point extraction.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::conic::{
    backend, ConicProgram, ConicSolution, EntryRef, LinearFunctional, PrimalPoint, Residuals, SolveStatus,
    SolverSettings, VarBlock,
};
use crate::error::{Error, Result};
use crate::geometry::{area_quartic_coeffs, ObservationSet, PointCloud};
use crate::graph::{build_graph, point_row, E3Mode, LiftIndexMaps, SimplicialGraph, THETA_PAIRS};
use crate::lifting::{self, DominancePair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SnrDsl,
    SnrPp,
    QnrDsl,
    QnrPp,
    HnrDsl,
    HnrPp,
    HnrPpAccel,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::SnrDsl,
        Method::SnrPp,
        Method::QnrDsl,
        Method::QnrPp,
        Method::HnrDsl,
        Method::HnrPp,
        Method::HnrPpAccel,
    ];

    pub fn is_dsl(self) -> bool {
        matches!(self, Method::SnrDsl | Method::QnrDsl | Method::HnrDsl)
    }

    pub fn is_strict(self) -> bool {
        matches!(self, Method::SnrDsl | Method::SnrPp)
    }

    pub fn is_hnr(self) -> bool {
        matches!(self, Method::HnrDsl | Method::HnrPp | Method::HnrPpAccel)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::SnrDsl => "snr-dsl",
            Method::SnrPp => "snr-pp",
            Method::QnrDsl => "qnr-dsl",
            Method::QnrPp => "qnr-pp",
            Method::HnrDsl => "hnr-dsl",
            Method::HnrPp => "hnr-pp",
            Method::HnrPpAccel => "hnr-pp-accel",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "s")]
pub enum Completion {
    #[default]
    Off,
    /// Hidden points take their depth term from the `s` nearest reference
    /// points visible in the same image.
    PseudoNeighbors(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    pub method: Method,
    pub lambda_i: f64,
    pub lambda_e: f64,
    pub knn: usize,
    pub e3_mode: E3Mode,
    pub completion: Completion,
    pub solver: SolverSettings,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            method: Method::SnrDsl,
            lambda_i: 100.0,
            lambda_e: 10.0,
            knn: 4,
            e3_mode: E3Mode::All,
            completion: Completion::Off,
            solver: SolverSettings::default(),
        }
    }
}

impl ReconstructionConfig {
    pub fn new(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.method.is_strict() && !(self.lambda_i > 0.0 && self.lambda_i.is_finite()) {
            return Err(Error::Config(format!("{} needs lambda_i > 0, got {}", self.method, self.lambda_i)));
        }
        if !(self.lambda_e >= 0.0 && self.lambda_e.is_finite()) {
            return Err(Error::Config(format!("lambda_e must be finite and >= 0, got {}", self.lambda_e)));
        }
        if let Completion::PseudoNeighbors(0) = self.completion {
            return Err(Error::Config("completion needs at least one pseudo-neighbour".into()));
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(Error::Config("solver tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Objective term categories, used for the objective breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Trace,
    InverseDepth,
    Reprojection,
    Depth,
    Isometry,
    Area,
}

/// `u >= |sum(f) - sum(g)|` with surpluses at `u + 1`, `u + 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsRecord {
    pub u: usize,
    pub f: Vec<LinearFunctional>,
    pub g: Vec<LinearFunctional>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseRecord {
    pub block: usize,
    pub diag: EntryRef,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceRecord {
    pub block: usize,
    pub off: EntryRef,
    pub diag: EntryRef,
}

/// Where every variable of a reconstruction program lives.
#[derive(Debug, Clone)]
pub struct ProgramLayout {
    pub method: Method,
    pub n: usize,
    pub m: usize,
    pub graph: SimplicialGraph,
    pub maps: Option<LiftIndexMaps>,
    /// Main Gram block of each image.
    pub gram: Vec<usize>,
    pub gram_dim: usize,
    /// Accelerated variant: one 18x18 block per image and triangle.
    pub triangle_blocks: Vec<Vec<usize>>,
    /// Accelerated variant: owning (triangle, local edge) of each unique edge.
    pub edge_owner: Vec<(usize, usize)>,
    pub g2: Vec<EntryRef>,
    pub g3: Vec<EntryRef>,
    pub abs_terms: Vec<AbsRecord>,
    pub inverse_terms: Vec<InverseRecord>,
    pub dominance_terms: Vec<DominanceRecord>,
    pub objective_parts: Vec<(Term, LinearFunctional)>,
    /// `pseudo_neighbors[i][j]` is empty unless point `j` is hidden in image `i`.
    pub pseudo_neighbors: Vec<Vec<Vec<usize>>>,
}

impl ProgramLayout {
    fn objective(&mut self, prog: &mut ConicProgram, term: Term, f: LinearFunctional) {
        prog.add_objective(f.clone());
        self.objective_parts.push((term, f));
    }

    fn abs(
        &mut self,
        prog: &mut ConicProgram,
        f: Vec<LinearFunctional>,
        g: Vec<LinearFunctional>,
        weight: f64,
        term: Term,
        label: &str,
    ) {
        let h = prog.add_abs_epigraph(&f, &g, 0.0, label);
        self.objective(prog, term, LinearFunctional::scalar(VarBlock::NonNeg, h.index, weight));
        self.abs_terms.push(AbsRecord { u: h.index, f, g });
    }

    fn inverse(&mut self, prog: &mut ConicProgram, diag: EntryRef, label: &str) {
        let h = prog.add_inverse_epigraph(diag, 0.0, label);
        self.objective(prog, Term::InverseDepth, LinearFunctional::entry(VarBlock::Psd(h.block), 0, 0, 1.0));
        self.inverse_terms.push(InverseRecord { block: h.block, diag });
    }

    fn dominance(&mut self, prog: &mut ConicProgram, off: EntryRef, diag: EntryRef, label: &str) {
        let h = prog.add_square_dominance(off, diag, label);
        self.dominance_terms.push(DominanceRecord { block: h.block, off, diag });
    }

    fn trace(&mut self, prog: &mut ConicProgram, block: usize, rows: impl Iterator<Item = usize>) {
        let mut f = LinearFunctional::new(VarBlock::Psd(block));
        for r in rows {
            f.add(r, r, 1.0);
        }
        self.objective(prog, Term::Trace, f);
    }

    pub fn maps(&self) -> Result<&LiftIndexMaps> {
        self.maps.as_ref().ok_or_else(|| Error::Structural("layout has no lift maps".into()))
    }

    /// Sum of each objective category at a primal point.
    pub fn objective_breakdown(&self, x: &PrimalPoint) -> BTreeMap<Term, f64> {
        let mut out = BTreeMap::new();
        for (t, f) in &self.objective_parts {
            *out.entry(*t).or_insert(0.0) += x.eval(f);
        }
        out
    }
}

/// Builds the kNN graph on the reference image for a configuration.
pub fn graph_for(obs: &ObservationSet, cfg: &ReconstructionConfig) -> Result<SimplicialGraph> {
    build_graph(&obs.reference_points(), cfg.knn, cfg.e3_mode)
}

/// Nearest reference points visible in image `i`, for each hidden point.
pub fn pseudo_neighbors(obs: &ObservationSet, s: usize) -> Vec<Vec<Vec<usize>>> {
    let reference = obs.reference_points();
    (0..obs.n)
        .map(|i| {
            (0..obs.m)
                .map(|j| {
                    if obs.is_visible(i, j) {
                        return Vec::new();
                    }
                    SimplicialGraph::nearest(&reference, j, obs.m)
                        .into_iter()
                        .filter(|&l| obs.is_visible(i, l))
                        .take(s)
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn check_inputs(obs: &ObservationSet, graph: &SimplicialGraph, cfg: &ReconstructionConfig) -> Result<()> {
    cfg.validate()?;
    if graph.m != obs.m {
        return Err(Error::InvalidInput(format!("graph has {} vertices, observations {} points", graph.m, obs.m)));
    }
    if graph.e2.is_empty() {
        return Err(Error::Structural("edge set is empty".into()));
    }
    if !obs.all_visible() {
        if cfg.method.is_dsl() {
            return Err(Error::Incompatible(format!(
                "{} needs every point visible in every image; use a PP method with completion",
                cfg.method
            )));
        }
        if cfg.completion == Completion::Off {
            return Err(Error::Incompatible("hidden points require --complete-missing".into()));
        }
    }
    if cfg.method.is_hnr() && graph.e3.is_empty() {
        return Err(Error::Config(format!("{} needs at least one 2-simplex; use a QNR method", cfg.method)));
    }
    Ok(())
}

/// Assembles the conic program of the configured method.
pub fn build_program(
    obs: &ObservationSet,
    graph: &SimplicialGraph,
    cfg: &ReconstructionConfig,
) -> Result<(ConicProgram, ProgramLayout)> {
    check_inputs(obs, graph, cfg)?;
    let method = cfg.method;
    let (n, m) = (obs.n, obs.m);
    let maps = if method.is_hnr() { Some(LiftIndexMaps::new(graph)?) } else { None };
    let gram_dim = match method {
        Method::SnrDsl | Method::QnrDsl => m,
        Method::HnrDsl => maps.as_ref().map(|mp| mp.t_dim()).unwrap_or(m),
        Method::SnrPp | Method::QnrPp | Method::HnrPpAccel => 3 * m + 1,
        Method::HnrPp => maps.as_ref().map(|mp| mp.u_dim()).unwrap_or(3 * m + 1),
    };
    let pn = match cfg.completion {
        Completion::PseudoNeighbors(s) => pseudo_neighbors(obs, s),
        Completion::Off => vec![vec![Vec::new(); m]; n],
    };
    let mut prog = ConicProgram::new();
    let mut lay = ProgramLayout {
        method,
        n,
        m,
        graph: graph.clone(),
        maps,
        gram: Vec::with_capacity(n),
        gram_dim,
        triangle_blocks: Vec::new(),
        edge_owner: Vec::new(),
        g2: Vec::new(),
        g3: Vec::new(),
        abs_terms: Vec::new(),
        inverse_terms: Vec::new(),
        dominance_terms: Vec::new(),
        objective_parts: Vec::new(),
        pseudo_neighbors: pn,
    };

    let g2_base = prog.add_nonneg(graph.p1());
    lay.g2 = (0..graph.p1()).map(|k| EntryRef::new(VarBlock::NonNeg, g2_base + k, g2_base + k)).collect();
    if method.is_hnr() {
        let g3_base = prog.add_nonneg(graph.p2());
        lay.g3 = (0..graph.p2()).map(|k| EntryRef::new(VarBlock::NonNeg, g3_base + k, g3_base + k)).collect();
    }
    let scale: Vec<LinearFunctional> = lay.g2.iter().map(|e| e.functional(1.0)).collect();
    prog.add_constraint(scale, 1.0, "scale");

    if method == Method::HnrPpAccel {
        let maps = lay.maps()?.clone();
        let mut owner = vec![None; maps.p2_tilde()];
        for (t, &(j, q, r)) in graph.e3.iter().enumerate() {
            for (e, (a, b)) in [(j, q), (q, r), (j, r)].into_iter().enumerate() {
                let k = maps.edge_position(a, b)?;
                owner[k].get_or_insert((t, e));
            }
        }
        lay.edge_owner = owner.into_iter().map(|o| o.expect("every unique edge belongs to a triangle")).collect();
    }

    for i in 0..n {
        let b = prog.add_psd_block(gram_dim, format!("gram:{i}"));
        lay.gram.push(b);
        if method.is_dsl() {
            build_dsl_image(&mut prog, &mut lay, obs, i, cfg)?;
        } else {
            build_pp_image(&mut prog, &mut lay, obs, i, cfg)?;
        }
    }
    Ok((prog, lay))
}

fn build_dsl_image(
    prog: &mut ConicProgram,
    lay: &mut ProgramLayout,
    obs: &ObservationSet,
    i: usize,
    cfg: &ReconstructionConfig,
) -> Result<()> {
    let blk = VarBlock::Psd(lay.gram[i]);
    let m = lay.m;
    lay.trace(prog, lay.gram[i], 0..lay.gram_dim);
    for j in 0..m {
        lay.inverse(prog, EntryRef::new(blk, j, j), &format!("inv:{i}:{j}"));
    }
    let d = &obs.sightlines[i];
    for (k, &(j, q)) in lay.graph.e2.clone().iter().enumerate() {
        let f = lifting::g_i_dsl(blk, j, q, d[j].dot(&d[q]));
        let label = format!("iso:{i}:{j}-{q}");
        if cfg.method.is_strict() {
            prog.add_constraint(vec![f, lay.g2[k].functional(-1.0)], 0.0, label);
        } else {
            lay.abs(prog, vec![f], vec![lay.g2[k].functional(1.0)], cfg.lambda_i, Term::Isometry, &label);
        }
    }
    if cfg.method == Method::HnrDsl {
        let maps = lay.maps()?.clone();
        for (t, &(j, q, r)) in lay.graph.e3.clone().iter().enumerate() {
            let coeffs = area_quartic_coeffs(&d[j], &d[q], &d[r]);
            let f = lifting::g_e_dsl(blk, j, q, r, &coeffs, &maps)?;
            let g = vec![lay.g3[t].functional(1.0)];
            lay.abs(prog, vec![f], g, cfg.lambda_e, Term::Area, &format!("area:{i}:{j}-{q}-{r}"));
        }
        for DominancePair { off, diag } in lifting::consistency_constraints_t(&maps) {
            lay.dominance(
                prog,
                EntryRef::new(blk, off.0, off.1),
                EntryRef::new(blk, diag, diag),
                &format!("dom:{i}:{}-{}", off.0, off.1),
            );
        }
    }
    Ok(())
}

fn build_pp_image(
    prog: &mut ConicProgram,
    lay: &mut ProgramLayout,
    obs: &ObservationSet,
    i: usize,
    cfg: &ReconstructionConfig,
) -> Result<()> {
    let blk = VarBlock::Psd(lay.gram[i]);
    let m = lay.m;
    prog.add_constraint(vec![LinearFunctional::entry(blk, 0, 0, 1.0)], 1.0, format!("corner:{i}"));
    lay.trace(prog, lay.gram[i], 0..lay.gram_dim);
    for j in 0..m {
        if obs.is_visible(i, j) {
            let d = obs.sightlines[i][j];
            lay.objective(prog, Term::Reprojection, lifting::f_reproj(blk, j, &d));
            lay.objective(prog, Term::Depth, lifting::f_mdh_pp(blk, j, &d).scaled(-1.0));
        } else {
            let f = lifting::f_mdh_completion(blk, obs, i, j, &lay.pseudo_neighbors[i][j])?;
            lay.objective(prog, Term::Depth, f.scaled(-1.0));
        }
    }
    for (k, &(j, q)) in lay.graph.e2.clone().iter().enumerate() {
        let f = lifting::g_i_pp(blk, j, q);
        let label = format!("iso:{i}:{j}-{q}");
        if cfg.method.is_strict() {
            prog.add_constraint(vec![f, lay.g2[k].functional(-1.0)], 0.0, label);
        } else {
            lay.abs(prog, vec![f], vec![lay.g2[k].functional(1.0)], cfg.lambda_i, Term::Isometry, &label);
        }
    }
    match cfg.method {
        Method::HnrPp => {
            let maps = lay.maps()?.clone();
            for (t, &(j, q, r)) in lay.graph.e3.clone().iter().enumerate() {
                let f = lifting::g_e_pp(blk, j, q, r, &maps)?;
                let g = vec![lay.g3[t].functional(1.0)];
                lay.abs(prog, vec![f], g, cfg.lambda_e, Term::Area, &format!("area:{i}:{j}-{q}-{r}"));
            }
            for DominancePair { off, diag } in lifting::consistency_constraints_u(&maps) {
                lay.dominance(
                    prog,
                    EntryRef::new(blk, off.0, off.1),
                    EntryRef::new(blk, diag, diag),
                    &format!("dom:{i}:{}-{}", off.0, off.1),
                );
            }
        }
        Method::HnrPpAccel => build_accel_image(prog, lay, i, cfg)?,
        _ => {}
    }
    Ok(())
}

fn build_accel_image(prog: &mut ConicProgram, lay: &mut ProgramLayout, i: usize, cfg: &ReconstructionConfig) -> Result<()> {
    let maps = lay.maps()?.clone();
    let e3 = lay.graph.e3.clone();
    let blocks: Vec<usize> = (0..e3.len()).map(|t| prog.add_psd_block(18, format!("tri:{i}:{t}"))).collect();
    let s_blk = VarBlock::Psd(lay.gram[i]);
    // copies of an edge's 6x6 block in non-owner triangles follow the owner
    for (t, &(j, q, r)) in e3.iter().enumerate() {
        for (e, (a, b)) in [(j, q), (q, r), (j, r)].into_iter().enumerate() {
            let (ot, oe) = lay.edge_owner[maps.edge_position(a, b)?];
            if (ot, oe) == (t, e) {
                continue;
            }
            for x in 0..6 {
                for y in x..6 {
                    prog.add_constraint(
                        vec![
                            LinearFunctional::entry(VarBlock::Psd(blocks[t]), 6 * e + x, 6 * e + y, 1.0),
                            LinearFunctional::entry(VarBlock::Psd(blocks[ot]), 6 * oe + x, 6 * oe + y, -1.0),
                        ],
                        0.0,
                        format!("link:{i}:{t}:{a}-{b}:{x}-{y}"),
                    );
                }
            }
        }
    }
    // trace of V over owned copies
    for (k, &(ot, oe)) in lay.edge_owner.clone().iter().enumerate() {
        let _ = k;
        lay.trace(prog, blocks[ot], 6 * oe..6 * oe + 6);
    }
    for (t, &(j, q, r)) in e3.iter().enumerate() {
        let f = lifting::g_e_pp_local(VarBlock::Psd(blocks[t]), j, q, r)?;
        let g = vec![lay.g3[t].functional(1.0)];
        lay.abs(prog, vec![f], g, cfg.lambda_e, Term::Area, &format!("area:{i}:{j}-{q}-{r}"));
    }
    for (k, &(a, b)) in maps.edges.iter().enumerate() {
        let (ot, oe) = lay.edge_owner[k];
        for (tt, &(ca, cb)) in THETA_PAIRS.iter().enumerate() {
            let row = 6 * oe + tt;
            lay.dominance(
                prog,
                EntryRef::new(s_blk, point_row(a, ca), point_row(b, cb)),
                EntryRef::new(VarBlock::Psd(blocks[ot]), row, row),
                &format!("dom:{i}:{a}-{b}:{tt}"),
            );
        }
    }
    lay.triangle_blocks.push(blocks);
    Ok(())
}

pub fn build_snr_dsl(obs: &ObservationSet, graph: &SimplicialGraph) -> Result<(ConicProgram, ProgramLayout)> {
    build_program(obs, graph, &ReconstructionConfig::new(Method::SnrDsl))
}

pub fn build_qnr_dsl(obs: &ObservationSet, graph: &SimplicialGraph, lambda_i: f64) -> Result<(ConicProgram, ProgramLayout)> {
    build_program(obs, graph, &ReconstructionConfig { lambda_i, ..ReconstructionConfig::new(Method::QnrDsl) })
}

/// Ground-truth data for the rank-1 lift of a program.
#[derive(Debug, Clone)]
pub struct GroundTruthLift<'a> {
    pub clouds: &'a [PointCloud],
    /// Squared template lengths per edge of the layout graph.
    pub geodesics: &'a [f64],
    /// Squared template areas per triangle of the layout graph.
    pub areas: &'a [f64],
}

/// Rank-1 primal point built from ground truth, with every auxiliary
/// variable set to its tightest feasible value.
pub fn ground_truth_point(prog: &ConicProgram, lay: &ProgramLayout, gt: &GroundTruthLift) -> Result<PrimalPoint> {
    if gt.clouds.len() != lay.n || gt.geodesics.len() != lay.graph.p1() {
        return Err(Error::InvalidInput("ground truth does not match the program layout".into()));
    }
    let mut x = PrimalPoint::zeros(prog);
    for i in 0..lay.n {
        let pts = &gt.clouds[i];
        let v = match lay.method {
            Method::SnrDsl | Method::QnrDsl => {
                nalgebra::DVector::from_iterator(lay.m, pts.iter().map(|p| p.norm()))
            }
            Method::HnrDsl => {
                let depths: Vec<f64> = pts.iter().map(|p| p.norm()).collect();
                lifting::depth_lift_vector(&depths, lay.maps()?)
            }
            Method::SnrPp | Method::QnrPp | Method::HnrPpAccel => lifting::point_vector(pts),
            Method::HnrPp => lifting::point_lift_vector(pts, lay.maps()?),
        };
        x.psd[lay.gram[i]] = lifting::outer(&v);
        if let Some(blocks) = lay.triangle_blocks.get(i) {
            for (t, &tri) in lay.graph.e3.iter().enumerate() {
                x.psd[blocks[t]] = lifting::outer(&lifting::triangle_theta_vector(pts, tri));
            }
        }
    }
    for (e, &g) in lay.g2.iter().zip(gt.geodesics) {
        x.set(*e, g);
    }
    for (e, &a) in lay.g3.iter().zip(gt.areas) {
        x.set(*e, a);
    }
    for rec in &lay.inverse_terms {
        let v = x.get(rec.diag);
        x.psd[rec.block] = DMatrix::from_row_slice(2, 2, &[1.0 / v, 1.0, 1.0, v]);
    }
    for rec in &lay.dominance_terms {
        let y = x.get(rec.off);
        let z = x.get(rec.diag);
        x.psd[rec.block] = DMatrix::from_row_slice(2, 2, &[z, y, y, 1.0]);
    }
    for rec in &lay.abs_terms {
        let d = x.eval_sum(&rec.f) - x.eval_sum(&rec.g);
        let u = d.abs();
        x.nonneg[rec.u] = u;
        x.nonneg[rec.u + 1] = u - d;
        x.nonneg[rec.u + 2] = u + d;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub status: SolveStatus,
    pub message: String,
    pub backend: String,
    pub iterations: usize,
    pub residuals: Residuals,
    pub objective: f64,
    pub dual_objective: f64,
    pub objective_breakdown: BTreeMap<Term, f64>,
    /// Leading eigenvalues (up to five) of each image's depth or point Gram.
    pub spectra: Vec<Vec<f64>>,
    /// Second over first eigenvalue per image; zero for an exact rank-1 block.
    pub rank1_ratio: Vec<f64>,
    pub min_eigenvalues: Vec<f64>,
    /// Extracted depths (DSL) or Z coordinates (PP) below `-1e-6`.
    pub negative_depths: usize,
    pub num_constraints: usize,
    pub num_psd_blocks: usize,
    pub largest_block: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub method: Method,
    pub clouds: Vec<PointCloud>,
    pub geodesics: Vec<f64>,
    pub areas: Option<Vec<f64>>,
    pub graph: SimplicialGraph,
    pub diagnostics: Diagnostics,
}

/// Leading eigenpairs in descending order.
fn descending_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = a.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
    let vals = idx.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Depths from the leading eigenvector of a depth Gram, sign fixed so the
/// mean depth is positive.
pub fn depths_from_gram(r: &DMatrix<f64>) -> Vec<f64> {
    let (vals, vecs) = descending_eigen(r);
    let s = vals[0].max(0.0).sqrt();
    let mut d: Vec<f64> = vecs.column(0).iter().map(|v| v * s).collect();
    if d.iter().sum::<f64>() < 0.0 {
        d.iter_mut().for_each(|v| *v = -*v);
    }
    d
}

/// Points from the first column of an augmented point Gram.
pub fn points_from_gram(s: &DMatrix<f64>, m: usize) -> PointCloud {
    (0..m)
        .map(|j| Vector3::new(s[(point_row(j, 0), 0)], s[(point_row(j, 1), 0)], s[(point_row(j, 2), 0)]))
        .collect()
}

/// Reads point clouds and shared geodesics/areas from an optimal solution.
pub fn extract_points(
    sol: &ConicSolution,
    lay: &ProgramLayout,
    obs: &ObservationSet,
    backend_name: &str,
    prog: &ConicProgram,
) -> Result<Reconstruction> {
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Solver(format!(
            "solver finished with status {:?} ({}), residuals {:?}",
            sol.status, sol.message, sol.residuals
        )));
    }
    let m = lay.m;
    let mut clouds = Vec::with_capacity(lay.n);
    let mut spectra = Vec::with_capacity(lay.n);
    let mut ratios = Vec::with_capacity(lay.n);
    let mut negative = 0;
    for i in 0..lay.n {
        let g = &sol.primal.psd[lay.gram[i]];
        let core = if lay.method.is_dsl() {
            g.view((0, 0), (m, m)).into_owned()
        } else {
            g.view((0, 0), (3 * m + 1, 3 * m + 1)).into_owned()
        };
        let (vals, _) = descending_eigen(&core);
        ratios.push(if vals[0] > 0.0 { vals.get(1).copied().unwrap_or(0.0).max(0.0) / vals[0] } else { 1.0 });
        spectra.push(vals.into_iter().take(5).collect());
        let cloud: PointCloud = if lay.method.is_dsl() {
            let d = depths_from_gram(&core);
            negative += d.iter().filter(|&&v| v < -1e-6).count();
            d.iter().zip(&obs.sightlines[i]).map(|(&dj, s)| s * dj).collect()
        } else {
            let pts = points_from_gram(&core, m);
            negative += pts.iter().filter(|p| p.z < -1e-6).count();
            pts
        };
        clouds.push(cloud);
    }
    let geodesics = lay.g2.iter().map(|&e| sol.primal.get(e)).collect();
    let areas = if lay.method.is_hnr() { Some(lay.g3.iter().map(|&e| sol.primal.get(e)).collect()) } else { None };
    let diagnostics = Diagnostics {
        status: sol.status,
        message: sol.message.clone(),
        backend: backend_name.to_string(),
        iterations: sol.iterations,
        residuals: sol.residuals,
        objective: sol.objective,
        dual_objective: sol.dual_objective,
        objective_breakdown: lay.objective_breakdown(&sol.primal),
        spectra,
        rank1_ratio: ratios,
        min_eigenvalues: sol.min_eigenvalues.clone(),
        negative_depths: negative,
        num_constraints: prog.num_constraints(),
        num_psd_blocks: prog.psd_blocks.len(),
        largest_block: prog.psd_blocks.iter().map(|b| b.dim).max().unwrap_or(0),
    };
    Ok(Reconstruction { method: lay.method, clouds, geodesics, areas, graph: lay.graph.clone(), diagnostics })
}

/// Builds, solves and extracts in one call, using the backend selected by
/// the environment.
pub fn reconstruct(obs: &ObservationSet, graph: &SimplicialGraph, cfg: &ReconstructionConfig) -> Result<Reconstruction> {
    let (prog, lay) = build_program(obs, graph, cfg)?;
    let be = backend::from_env();
    let sol = be.solve(&prog, &cfg.solver)?;
    extract_points(&sol, &lay, obs, &be.name(), &prog)
}
