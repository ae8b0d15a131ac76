use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variable group a functional acts on.
///
/// PSD blocks are matrices. Second-order-cone blocks and the nonnegative and
/// free pools are vectors; their entries are addressed as diagonal positions
/// `(i, i)` so that every functional uses the same triplet layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarBlock {
    Psd(usize),
    Soc(usize),
    NonNeg,
    Free,
}

/// Sparse linear functional over one variable group plus a constant.
///
/// Entries are stored once with `row <= col`. For a matrix block the value is
/// `sum(coef * X[row][col]) + constant`, so an off-diagonal coefficient
/// already carries the factor two coming from the symmetric twin entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFunctional {
    pub block: VarBlock,
    pub entries: Vec<(usize, usize, f64)>,
    pub constant: f64,
}

impl LinearFunctional {
    pub fn new(block: VarBlock) -> Self {
        Self { block, entries: Vec::new(), constant: 0.0 }
    }

    /// Single-entry functional `coef * X[row][col]`.
    pub fn entry(block: VarBlock, row: usize, col: usize, coef: f64) -> Self {
        let mut f = Self::new(block);
        f.add(row, col, coef);
        f
    }

    /// Single scalar variable of a vector group.
    pub fn scalar(block: VarBlock, index: usize, coef: f64) -> Self {
        Self::entry(block, index, index, coef)
    }

    pub fn add(&mut self, row: usize, col: usize, coef: f64) -> &mut Self {
        let (r, c) = if row <= col { (row, col) } else { (col, row) };
        if let Some(e) = self.entries.iter_mut().find(|e| e.0 == r && e.1 == c) {
            e.2 += coef;
        } else {
            self.entries.push((r, c, coef));
        }
        self
    }

    pub fn with_constant(mut self, constant: f64) -> Self {
        self.constant = constant;
        self
    }

    /// Merges duplicates, drops exact zeros and sorts entries.
    pub fn normalized(&self) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(self.entries.len());
        let mut sorted = self.entries.clone();
        for e in sorted.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0, e.2);
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for (r, c, v) in sorted {
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        entries.retain(|e| e.2 != 0.0);
        Self { block: self.block, entries, constant: self.constant }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            block: self.block,
            entries: self.entries.iter().map(|&(r, c, v)| (r, c, v * s)).collect(),
            constant: self.constant * s,
        }
    }

    /// Evaluates the functional on a symmetric matrix.
    pub fn eval_matrix(&self, x: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&(r, c, v)| v * x[(r, c)]).sum::<f64>() + self.constant
    }

    /// Evaluates the functional on a vector group.
    pub fn eval_vector(&self, x: &DVector<f64>) -> f64 {
        self.entries.iter().map(|&(r, _, v)| v * x[r]).sum::<f64>() + self.constant
    }

    /// Symmetric matrix `A` with `eval(X) = <A, X> + constant`.
    pub fn to_symmetric(&self, dim: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(dim, dim);
        for &(r, c, v) in &self.entries {
            if r == c {
                a[(r, r)] += v;
            } else {
                a[(r, c)] += 0.5 * v;
                a[(c, r)] += 0.5 * v;
            }
        }
        a
    }
}

/// Equality row `sum(terms) = rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub terms: Vec<LinearFunctional>,
    pub rhs: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub dim: usize,
    pub label: String,
}

/// Block-structured conic program in equality standard form:
/// minimize the objective subject to equality rows, with every PSD block
/// positive semidefinite, every SOC block in its Lorentz cone, nonnegative
/// pool entries `>= 0` and free pool entries unrestricted.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConicProgram {
    pub psd_blocks: Vec<BlockInfo>,
    pub soc_blocks: Vec<BlockInfo>,
    pub nonneg_vars: usize,
    pub free_vars: usize,
    pub objective: Vec<LinearFunctional>,
    pub constraints: Vec<Constraint>,
}

/// Location of a scalar nonnegative slack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlackHandle {
    pub index: usize,
}

/// 2x2 PSD block created by an epigraph or dominance encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHandle {
    pub block: usize,
}

/// A single matrix or vector entry of a declared variable group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryRef {
    pub block: VarBlock,
    pub row: usize,
    pub col: usize,
}

impl EntryRef {
    pub fn new(block: VarBlock, row: usize, col: usize) -> Self {
        Self { block, row, col }
    }

    pub fn functional(&self, coef: f64) -> LinearFunctional {
        LinearFunctional::entry(self.block, self.row, self.col, coef)
    }
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_psd_block(&mut self, dim: usize, label: impl Into<String>) -> usize {
        self.psd_blocks.push(BlockInfo { dim, label: label.into() });
        self.psd_blocks.len() - 1
    }

    pub fn add_soc_block(&mut self, dim: usize, label: impl Into<String>) -> usize {
        self.soc_blocks.push(BlockInfo { dim, label: label.into() });
        self.soc_blocks.len() - 1
    }

    /// Appends `count` nonnegative scalars and returns the first index.
    pub fn add_nonneg(&mut self, count: usize) -> usize {
        self.nonneg_vars += count;
        self.nonneg_vars - count
    }

    /// Appends `count` free scalars and returns the first index.
    pub fn add_free(&mut self, count: usize) -> usize {
        self.free_vars += count;
        self.free_vars - count
    }

    pub fn add_objective(&mut self, f: LinearFunctional) {
        self.objective.push(f);
    }

    pub fn add_constraint(&mut self, terms: Vec<LinearFunctional>, rhs: f64, label: impl Into<String>) -> usize {
        self.constraints.push(Constraint { terms, rhs, label: label.into() });
        self.constraints.len() - 1
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn count_label_prefix(&self, prefix: &str) -> usize {
        self.constraints.iter().filter(|c| c.label.starts_with(prefix)).count()
    }

    /// Checks that every functional resolves to a declared entry.
    pub fn validate(&self) -> Result<()> {
        for (k, b) in self.psd_blocks.iter().enumerate() {
            if b.dim == 0 {
                return Err(Error::InvalidInput(format!("PSD block {k} has zero dimension")));
            }
        }
        for (k, b) in self.soc_blocks.iter().enumerate() {
            if b.dim == 0 {
                return Err(Error::InvalidInput(format!("SOC block {k} has zero dimension")));
            }
        }
        let check = |f: &LinearFunctional, ctx: &str| -> Result<()> {
            let bound = match f.block {
                VarBlock::Psd(k) => self.psd_blocks.get(k).map(|b| b.dim),
                VarBlock::Soc(k) => self.soc_blocks.get(k).map(|b| b.dim),
                VarBlock::NonNeg => Some(self.nonneg_vars),
                VarBlock::Free => Some(self.free_vars),
            }
            .ok_or_else(|| Error::InvalidInput(format!("{ctx}: unknown block {:?}", f.block)))?;
            let matrix = matches!(f.block, VarBlock::Psd(_));
            for &(r, c, v) in &f.entries {
                if r >= bound || c >= bound || (!matrix && r != c) || !v.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "{ctx}: entry ({r}, {c}, {v}) invalid for {:?}",
                        f.block
                    )));
                }
            }
            if !f.constant.is_finite() {
                return Err(Error::InvalidInput(format!("{ctx}: non-finite constant")));
            }
            Ok(())
        };
        for f in &self.objective {
            check(f, "objective")?;
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(Error::InvalidInput(format!("constraint {i} has non-finite rhs")));
            }
            for f in &c.terms {
                check(f, &format!("constraint {i} ({})", c.label))?;
            }
        }
        Ok(())
    }

    /// Adds `weight * u` to the objective with `u >= f - g` and `u >= g - f`,
    /// each inequality written as an equality row with its own nonnegative
    /// surplus. `g` is any expression (typically one scalar variable).
    pub fn add_abs_epigraph(
        &mut self,
        f: &[LinearFunctional],
        g: &[LinearFunctional],
        weight: f64,
        label: &str,
    ) -> SlackHandle {
        let u = self.add_nonneg(3);
        let (s1, s2) = (u + 1, u + 2);
        // u - (f - g) - s1 = 0
        let mut row1 = vec![LinearFunctional::scalar(VarBlock::NonNeg, u, 1.0)];
        row1.last_mut().unwrap().add(s1, s1, -1.0);
        row1.extend(f.iter().map(|t| t.scaled(-1.0)));
        row1.extend(g.iter().cloned());
        // u + (f - g) - s2 = 0
        let mut row2 = vec![LinearFunctional::scalar(VarBlock::NonNeg, u, 1.0)];
        row2.last_mut().unwrap().add(s2, s2, -1.0);
        row2.extend(f.iter().cloned());
        row2.extend(g.iter().map(|t| t.scaled(-1.0)));
        self.add_constraint(row1, 0.0, format!("{label}:abs+"));
        self.add_constraint(row2, 0.0, format!("{label}:abs-"));
        if weight != 0.0 {
            self.add_objective(LinearFunctional::scalar(VarBlock::NonNeg, u, weight));
        }
        SlackHandle { index: u }
    }

    /// Adds `weight * t` with `[[t, 1], [1, x]] >= 0`, i.e. `t >= 1/x`.
    pub fn add_inverse_epigraph(&mut self, diag: EntryRef, weight: f64, label: &str) -> BlockHandle {
        let b = self.add_psd_block(2, format!("{label}:inv"));
        let blk = VarBlock::Psd(b);
        self.add_constraint(vec![LinearFunctional::entry(blk, 0, 1, 1.0)], 1.0, format!("{label}:inv-one"));
        self.add_constraint(
            vec![LinearFunctional::entry(blk, 1, 1, 1.0), diag.functional(-1.0)],
            0.0,
            format!("{label}:inv-link"),
        );
        if weight != 0.0 {
            self.add_objective(LinearFunctional::entry(blk, 0, 0, weight));
        }
        BlockHandle { block: b }
    }

    /// Enforces `y^2 <= z` through `[[z, y], [y, 1]] >= 0`.
    pub fn add_square_dominance(&mut self, off_diag: EntryRef, diag: EntryRef, label: &str) -> BlockHandle {
        let b = self.add_psd_block(2, format!("{label}:dom"));
        let blk = VarBlock::Psd(b);
        self.add_constraint(
            vec![LinearFunctional::entry(blk, 0, 0, 1.0), diag.functional(-1.0)],
            0.0,
            format!("{label}:dom-diag"),
        );
        // X01 counts once, so the off-diagonal link uses coefficient 1 on both sides
        self.add_constraint(
            vec![LinearFunctional::entry(blk, 0, 1, 1.0), off_diag.functional(-1.0)],
            0.0,
            format!("{label}:dom-off"),
        );
        self.add_constraint(vec![LinearFunctional::entry(blk, 1, 1, 1.0)], 1.0, format!("{label}:dom-one"));
        BlockHandle { block: b }
    }
}

/// Values for every variable group of a program.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalPoint {
    pub psd: Vec<DMatrix<f64>>,
    pub soc: Vec<DVector<f64>>,
    pub nonneg: DVector<f64>,
    pub free: DVector<f64>,
}

impl PrimalPoint {
    pub fn zeros(prog: &ConicProgram) -> Self {
        Self {
            psd: prog.psd_blocks.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect(),
            soc: prog.soc_blocks.iter().map(|b| DVector::zeros(b.dim)).collect(),
            nonneg: DVector::zeros(prog.nonneg_vars),
            free: DVector::zeros(prog.free_vars),
        }
    }

    pub fn eval(&self, f: &LinearFunctional) -> f64 {
        match f.block {
            VarBlock::Psd(k) => f.eval_matrix(&self.psd[k]),
            VarBlock::Soc(k) => f.eval_vector(&self.soc[k]),
            VarBlock::NonNeg => f.eval_vector(&self.nonneg),
            VarBlock::Free => f.eval_vector(&self.free),
        }
    }

    pub fn eval_sum(&self, terms: &[LinearFunctional]) -> f64 {
        terms.iter().map(|f| self.eval(f)).sum()
    }

    pub fn get(&self, e: EntryRef) -> f64 {
        match e.block {
            VarBlock::Psd(k) => self.psd[k][(e.row, e.col)],
            VarBlock::Soc(k) => self.soc[k][e.row],
            VarBlock::NonNeg => self.nonneg[e.row],
            VarBlock::Free => self.free[e.row],
        }
    }

    pub fn set(&mut self, e: EntryRef, v: f64) {
        match e.block {
            VarBlock::Psd(k) => {
                self.psd[k][(e.row, e.col)] = v;
                self.psd[k][(e.col, e.row)] = v;
            }
            VarBlock::Soc(k) => self.soc[k][e.row] = v,
            VarBlock::NonNeg => self.nonneg[e.row] = v,
            VarBlock::Free => self.free[e.row] = v,
        }
    }

    pub fn objective(&self, prog: &ConicProgram) -> f64 {
        self.eval_sum(&prog.objective)
    }

    /// Largest absolute violation of the equality rows, scaled by `1 + |rhs|`.
    pub fn max_equality_violation(&self, prog: &ConicProgram) -> f64 {
        prog.constraints
            .iter()
            .map(|c| (self.eval_sum(&c.terms) - c.rhs).abs() / (1.0 + c.rhs.abs()))
            .fold(0.0, f64::max)
    }

    /// Most negative cone margin: smallest PSD eigenvalue, SOC margin or
    /// nonnegative entry (returned as a nonpositive number when violated).
    pub fn min_cone_margin(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for x in &self.psd {
            let e = x.clone().symmetric_eigenvalues();
            worst = worst.min(e.min());
        }
        for x in &self.soc {
            let tail = x.rows(1, x.len() - 1).norm();
            worst = worst.min(x[0] - tail);
        }
        if !self.nonneg.is_empty() {
            worst = worst.min(self.nonneg.min());
        }
        worst
    }
}
