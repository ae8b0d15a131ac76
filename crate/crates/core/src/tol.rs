//! Tolerance constants shared across modules.

/// Reference points closer than this are treated as duplicates.
pub const DUPLICATE_POINT: f64 = 1e-12;
/// Triangles whose reference area is below this fraction of the squared mean
/// edge length are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-6;
/// Unit-norm tolerance for sightlines.
pub const UNIT_NORM: f64 = 1e-12;
/// Default conic solver residual tolerance.
pub const SOLVER_TOL: f64 = 1e-7;
/// Default interior-point iteration cap.
pub const SOLVER_MAX_ITER: usize = 200;
/// Relative tolerance for rank-1 feasibility checks.
pub const FEASIBILITY: f64 = 1e-8;
