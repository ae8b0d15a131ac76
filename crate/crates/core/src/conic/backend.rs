//! Solver backends. The embedded interior-point method is the default; an
//! external binary can be substituted through `NRSFM_CONIC_SOLVER`.

use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::ipm::{self, ConicSolution, SolverSettings};
use super::ir;
use super::program::ConicProgram;
use crate::error::{Error, Result};

/// Environment variable naming an external solver executable.
pub const SOLVER_ENV: &str = "NRSFM_CONIC_SOLVER";

pub trait Backend {
    fn name(&self) -> String;
    fn solve(&self, prog: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Embedded;

impl Backend for Embedded {
    fn name(&self) -> String {
        "embedded-ipm".into()
    }

    fn solve(&self, prog: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution> {
        ipm::solve(prog, settings)
    }
}

/// Runs `<program> <problem-file> <solution-file>` with the tolerance and
/// iteration cap exported as `NRSFM_CONIC_TOL` and `NRSFM_CONIC_MAX_ITER`.
#[derive(Debug, Clone)]
pub struct External {
    pub program: PathBuf,
}

static COUNTER: AtomicUsize = AtomicUsize::new(0);

impl Backend for External {
    fn name(&self) -> String {
        format!("external:{}", self.program.display())
    }

    fn solve(&self, prog: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution> {
        let id = COUNTER.fetch_add(1, Ordering::Relaxed);
        let dir = std::env::temp_dir();
        let stem = format!("nrsfm-conic-{}-{}", std::process::id(), id);
        let problem = dir.join(format!("{stem}.ir"));
        let solution = dir.join(format!("{stem}.sol"));
        ir::export_program(prog, &problem)?;
        let status = Command::new(&self.program)
            .arg(&problem)
            .arg(&solution)
            .env("NRSFM_CONIC_TOL", format!("{:e}", settings.tol))
            .env("NRSFM_CONIC_MAX_ITER", settings.max_iter.to_string())
            .status();
        let result = match status {
            Ok(s) if s.success() => std::fs::read_to_string(&solution)
                .map_err(Error::from)
                .and_then(|text| ir::parse_solution(&text, prog)),
            Ok(s) => Err(Error::Solver(format!("external solver exited with {s}"))),
            Err(e) => Err(Error::Solver(format!("cannot run {}: {e}", self.program.display()))),
        };
        let _ = std::fs::remove_file(&problem);
        let _ = std::fs::remove_file(&solution);
        result
    }
}

/// External backend if `NRSFM_CONIC_SOLVER` is set and non-empty, else the
/// embedded solver.
pub fn from_env() -> Box<dyn Backend> {
    match std::env::var_os(SOLVER_ENV) {
        Some(p) if !p.is_empty() => Box::new(External { program: PathBuf::from(p) }),
        _ => Box::new(Embedded),
    }
}
