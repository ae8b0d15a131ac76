//! Text interchange format for conic programs and their solutions.
//!
//! Problem files:
//!
//! ```text
//! # nrsfm-conic-ir
//! version 1
//! psd <count>
//! <dim> [label]            one line per PSD block
//! soc <count>
//! <dim> [label]            one line per SOC block
//! nonneg <count>
//! free <count>
//! objective <terms>
//! term <block> <constant> <nnz>
//! <row> <col> <value>      nnz lines, row <= col
//! constraints <count>
//! constraint <rhs> <terms> [label]
//! term ...                 as for the objective
//! end
//! ```
//!
//! `<block>` is `p<k>` (PSD block k), `s<k>` (SOC block k), `n` (nonnegative
//! pool) or `f` (free pool). Indices are 0-based. Vector-group entries use
//! `row == col`. Off-diagonal PSD coefficients multiply the single stored
//! entry `X[row][col]`, so a symmetric pair counts once. Lines starting with
//! `#` after the header are ignored. Reals are written in shortest
//! round-trip exponent form.
//!
//! Solution files:
//!
//! ```text
//! # nrsfm-conic-solution
//! version 1
//! status optimal|infeasible|unbounded|max_iter
//! objective <value>
//! dual_objective <value>
//! residuals <primal> <dual> <gap>
//! iterations <count>
//! psd <k> <dim>            followed by dim rows of dim values
//! soc <k> <dim>            followed by one row of dim values
//! nonneg <count>           followed by one row of values (omitted if 0)
//! free <count>             likewise
//! duals <count>            likewise
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::ipm::{ConicSolution, Residuals, SolveStatus};
use super::program::{BlockInfo, ConicProgram, Constraint, LinearFunctional, PrimalPoint, VarBlock};
use crate::error::{Error, Result};

pub const PROGRAM_HEADER: &str = "# nrsfm-conic-ir";
pub const SOLUTION_HEADER: &str = "# nrsfm-conic-solution";
pub const FORMAT_VERSION: u32 = 1;

fn block_tag(b: VarBlock) -> String {
    match b {
        VarBlock::Psd(k) => format!("p{k}"),
        VarBlock::Soc(k) => format!("s{k}"),
        VarBlock::NonNeg => "n".into(),
        VarBlock::Free => "f".into(),
    }
}

fn write_term(out: &mut String, f: &LinearFunctional) {
    let _ = writeln!(out, "term {} {:e} {}", block_tag(f.block), f.constant, f.entries.len());
    for &(r, c, v) in &f.entries {
        let _ = writeln!(out, "{r} {c} {v:e}");
    }
}

fn write_label(out: &mut String, label: &str) {
    if !label.is_empty() {
        out.push(' ');
        out.push_str(&label.replace(['\n', '\r'], " "));
    }
    out.push('\n');
}

/// Serializes a program to the text format.
pub fn program_to_string(prog: &ConicProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{PROGRAM_HEADER}");
    let _ = writeln!(out, "version {FORMAT_VERSION}");
    let _ = writeln!(out, "psd {}", prog.psd_blocks.len());
    for b in &prog.psd_blocks {
        let _ = write!(out, "{}", b.dim);
        write_label(&mut out, &b.label);
    }
    let _ = writeln!(out, "soc {}", prog.soc_blocks.len());
    for b in &prog.soc_blocks {
        let _ = write!(out, "{}", b.dim);
        write_label(&mut out, &b.label);
    }
    let _ = writeln!(out, "nonneg {}", prog.nonneg_vars);
    let _ = writeln!(out, "free {}", prog.free_vars);
    let _ = writeln!(out, "objective {}", prog.objective.len());
    for f in &prog.objective {
        write_term(&mut out, f);
    }
    let _ = writeln!(out, "constraints {}", prog.constraints.len());
    for c in &prog.constraints {
        let _ = write!(out, "constraint {:e} {}", c.rhs, c.terms.len());
        write_label(&mut out, &c.label);
        for f in &c.terms {
            write_term(&mut out, f);
        }
    }
    out.push_str("end\n");
    out
}

pub fn export_program(prog: &ConicProgram, path: &Path) -> Result<()> {
    std::fs::write(path, program_to_string(prog))?;
    Ok(())
}

pub fn import_program(path: &Path) -> Result<ConicProgram> {
    parse_program(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self { inner: text.lines().enumerate().peekable(), line: 0 }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.line, msg: msg.into() }
    }

    fn next_raw(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(Error::Parse { line: self.line + 1, msg: "unexpected end of file".into() }),
        }
    }

    /// Next non-empty, non-comment line.
    fn next(&mut self) -> Result<&'a str> {
        loop {
            let l = self.next_raw()?;
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Ok(t);
            }
        }
    }

    /// Reads `keyword value` and returns the value tokens.
    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let l = self.next()?;
        let mut it = l.split_whitespace();
        if it.next() != Some(key) {
            return Err(self.err(format!("expected '{key}', found '{l}'")));
        }
        Ok(it.collect())
    }

    fn num<T: std::str::FromStr>(&self, tok: Option<&str>, what: &str) -> Result<T> {
        tok.ok_or_else(|| self.err(format!("missing {what}")))?
            .parse()
            .map_err(|_| self.err(format!("invalid {what}")))
    }
}

/// Splits `tokens` after `n` fields and rejoins the rest as a label.
fn label_after(line: &str, n: usize) -> String {
    let mut rest = line.trim();
    for _ in 0..n {
        rest = rest.trim_start();
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        rest = &rest[end..];
    }
    rest.trim().to_string()
}

fn parse_block(lines: &Lines, tok: &str) -> Result<VarBlock> {
    match tok {
        "n" => Ok(VarBlock::NonNeg),
        "f" => Ok(VarBlock::Free),
        t if t.starts_with('p') => Ok(VarBlock::Psd(lines.num(Some(&t[1..]), "PSD block index")?)),
        t if t.starts_with('s') => Ok(VarBlock::Soc(lines.num(Some(&t[1..]), "SOC block index")?)),
        t => Err(lines.err(format!("unknown block tag '{t}'"))),
    }
}

fn parse_term(lines: &mut Lines) -> Result<LinearFunctional> {
    let toks = lines.keyed("term")?;
    let block = parse_block(lines, toks.first().copied().unwrap_or(""))?;
    let constant: f64 = lines.num(toks.get(1).copied(), "term constant")?;
    let nnz: usize = lines.num(toks.get(2).copied(), "term nnz")?;
    let mut f = LinearFunctional::new(block);
    f.constant = constant;
    for _ in 0..nnz {
        let l = lines.next()?;
        let mut it = l.split_whitespace();
        let r: usize = lines.num(it.next(), "row")?;
        let c: usize = lines.num(it.next(), "col")?;
        let v: f64 = lines.num(it.next(), "value")?;
        f.entries.push((r, c, v));
    }
    Ok(f)
}

fn parse_blocks(lines: &mut Lines, key: &str) -> Result<Vec<BlockInfo>> {
    let toks = lines.keyed(key)?;
    let count: usize = lines.num(toks.first().copied(), "block count")?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let l = lines.next()?;
        let dim: usize = lines.num(l.split_whitespace().next(), "block dimension")?;
        out.push(BlockInfo { dim, label: label_after(l, 1) });
    }
    Ok(out)
}

fn check_header(lines: &mut Lines, header: &str) -> Result<()> {
    let first = lines.next_raw()?.trim();
    if first != header {
        return Err(lines.err(format!("expected header '{header}'")));
    }
    let toks = lines.keyed("version")?;
    let v: u32 = lines.num(toks.first().copied(), "version")?;
    if v != FORMAT_VERSION {
        return Err(lines.err(format!("unsupported version {v}")));
    }
    Ok(())
}

pub fn parse_program(text: &str) -> Result<ConicProgram> {
    let mut lines = Lines::new(text);
    check_header(&mut lines, PROGRAM_HEADER)?;
    let mut prog = ConicProgram::new();
    prog.psd_blocks = parse_blocks(&mut lines, "psd")?;
    prog.soc_blocks = parse_blocks(&mut lines, "soc")?;
    let t = lines.keyed("nonneg")?;
    prog.nonneg_vars = lines.num(t.first().copied(), "nonneg count")?;
    let t = lines.keyed("free")?;
    prog.free_vars = lines.num(t.first().copied(), "free count")?;
    let t = lines.keyed("objective")?;
    let nterms: usize = lines.num(t.first().copied(), "objective term count")?;
    for _ in 0..nterms {
        prog.objective.push(parse_term(&mut lines)?);
    }
    let t = lines.keyed("constraints")?;
    let ncons: usize = lines.num(t.first().copied(), "constraint count")?;
    for _ in 0..ncons {
        let l = lines.next()?;
        let mut it = l.split_whitespace();
        if it.next() != Some("constraint") {
            return Err(lines.err("expected 'constraint'"));
        }
        let rhs: f64 = lines.num(it.next(), "rhs")?;
        let nt: usize = lines.num(it.next(), "constraint term count")?;
        let label = label_after(l, 3);
        let mut terms = Vec::with_capacity(nt);
        for _ in 0..nt {
            terms.push(parse_term(&mut lines)?);
        }
        prog.constraints.push(Constraint { terms, rhs, label });
    }
    if lines.next()? != "end" {
        return Err(lines.err("expected 'end'"));
    }
    prog.validate()?;
    Ok(prog)
}

fn status_str(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::Unbounded => "unbounded",
        SolveStatus::MaxIter => "max_iter",
    }
}

fn write_row<'a>(out: &mut String, vals: impl Iterator<Item = &'a f64>) {
    let row: Vec<String> = vals.map(|v| format!("{v:e}")).collect();
    out.push_str(&row.join(" "));
    out.push('\n');
}

pub fn solution_to_string(sol: &ConicSolution) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SOLUTION_HEADER}");
    let _ = writeln!(out, "version {FORMAT_VERSION}");
    let _ = writeln!(out, "status {}", status_str(sol.status));
    let _ = writeln!(out, "objective {:e}", sol.objective);
    let _ = writeln!(out, "dual_objective {:e}", sol.dual_objective);
    let r = sol.residuals;
    let _ = writeln!(out, "residuals {:e} {:e} {:e}", r.primal, r.dual, r.gap);
    let _ = writeln!(out, "iterations {}", sol.iterations);
    for (k, x) in sol.primal.psd.iter().enumerate() {
        let _ = writeln!(out, "psd {k} {}", x.nrows());
        for i in 0..x.nrows() {
            write_row(&mut out, x.row(i).iter());
        }
    }
    for (k, x) in sol.primal.soc.iter().enumerate() {
        let _ = writeln!(out, "soc {k} {}", x.len());
        write_row(&mut out, x.iter());
    }
    for (key, v) in [("nonneg", &sol.primal.nonneg), ("free", &sol.primal.free)] {
        let _ = writeln!(out, "{key} {}", v.len());
        if !v.is_empty() {
            write_row(&mut out, v.iter());
        }
    }
    let _ = writeln!(out, "duals {}", sol.duals.len());
    if !sol.duals.is_empty() {
        write_row(&mut out, sol.duals.iter());
    }
    out.push_str("end\n");
    out
}

fn parse_values(lines: &mut Lines, n: usize) -> Result<Vec<f64>> {
    let l = lines.next()?;
    let vals: Vec<f64> = l
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| lines.err("invalid value"))?;
    if vals.len() != n {
        return Err(lines.err(format!("expected {n} values, found {}", vals.len())));
    }
    Ok(vals)
}

/// Parses a solution file for `prog`. Dual slacks are recomputed from the
/// multipliers as `c - A^T y`.
pub fn parse_solution(text: &str, prog: &ConicProgram) -> Result<ConicSolution> {
    let mut lines = Lines::new(text);
    check_header(&mut lines, SOLUTION_HEADER)?;
    let t = lines.keyed("status")?;
    let status = match t.first().copied() {
        Some("optimal") => SolveStatus::Optimal,
        Some("infeasible") => SolveStatus::Infeasible,
        Some("unbounded") => SolveStatus::Unbounded,
        Some("max_iter") => SolveStatus::MaxIter,
        _ => return Err(lines.err("unknown status")),
    };
    let t = lines.keyed("objective")?;
    let objective: f64 = lines.num(t.first().copied(), "objective")?;
    let t = lines.keyed("dual_objective")?;
    let dual_objective: f64 = lines.num(t.first().copied(), "dual objective")?;
    let t = lines.keyed("residuals")?;
    let residuals = Residuals {
        primal: lines.num(t.first().copied(), "primal residual")?,
        dual: lines.num(t.get(1).copied(), "dual residual")?,
        gap: lines.num(t.get(2).copied(), "gap")?,
    };
    let t = lines.keyed("iterations")?;
    let iterations: usize = lines.num(t.first().copied(), "iterations")?;
    let mut primal = PrimalPoint::zeros(prog);
    let mut duals = Vec::new();
    loop {
        let l = lines.next()?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks[0] {
            "end" => break,
            "psd" | "soc" => {
                let k: usize = lines.num(toks.get(1).copied(), "block index")?;
                let dim: usize = lines.num(toks.get(2).copied(), "block dimension")?;
                if toks[0] == "psd" {
                    if prog.psd_blocks.get(k).map(|b| b.dim) != Some(dim) {
                        return Err(lines.err(format!("PSD block {k} does not match the program")));
                    }
                    let mut x = DMatrix::zeros(dim, dim);
                    for i in 0..dim {
                        let row = parse_values(&mut lines, dim)?;
                        for (j, v) in row.into_iter().enumerate() {
                            x[(i, j)] = v;
                        }
                    }
                    primal.psd[k] = x;
                } else {
                    if prog.soc_blocks.get(k).map(|b| b.dim) != Some(dim) {
                        return Err(lines.err(format!("SOC block {k} does not match the program")));
                    }
                    primal.soc[k] = DVector::from_vec(parse_values(&mut lines, dim)?);
                }
            }
            key @ ("nonneg" | "free" | "duals") => {
                let n: usize = lines.num(toks.get(1).copied(), "count")?;
                let vals = if n > 0 { parse_values(&mut lines, n)? } else { Vec::new() };
                let expected = match key {
                    "nonneg" => prog.nonneg_vars,
                    "free" => prog.free_vars,
                    _ => prog.constraints.len(),
                };
                if n != expected {
                    return Err(lines.err(format!("{key} count {n} does not match the program ({expected})")));
                }
                match key {
                    "nonneg" => primal.nonneg = DVector::from_vec(vals),
                    "free" => primal.free = DVector::from_vec(vals),
                    _ => duals = vals,
                }
            }
            other => return Err(lines.err(format!("unexpected section '{other}'"))),
        }
    }
    if duals.is_empty() {
        duals = vec![0.0; prog.constraints.len()];
    }
    let dual_slack = dual_slack_from(prog, &duals);
    let min_eigenvalues = primal.psd.iter().map(|m| m.clone().symmetric_eigenvalues().min()).collect();
    Ok(ConicSolution {
        status,
        primal,
        dual_slack,
        duals,
        objective,
        dual_objective,
        residuals,
        iterations,
        min_eigenvalues,
        message: "read from solution file".into(),
    })
}

/// `c - A^T y` laid out as a primal point (free pool set to zero).
pub fn dual_slack_from(prog: &ConicProgram, y: &[f64]) -> PrimalPoint {
    let mut z = PrimalPoint::zeros(prog);
    let mut add = |f: &LinearFunctional, s: f64| {
        for &(r, c, v) in &f.entries {
            match f.block {
                VarBlock::Psd(k) => {
                    if r == c {
                        z.psd[k][(r, r)] += s * v;
                    } else {
                        z.psd[k][(r, c)] += 0.5 * s * v;
                        z.psd[k][(c, r)] += 0.5 * s * v;
                    }
                }
                VarBlock::Soc(k) => z.soc[k][r] += s * v,
                VarBlock::NonNeg => z.nonneg[r] += s * v,
                VarBlock::Free => {}
            }
        }
    };
    for f in &prog.objective {
        add(f, 1.0);
    }
    for (c, yi) in prog.constraints.iter().zip(y) {
        for f in &c.terms {
            add(f, -yi);
        }
    }
    z
}
