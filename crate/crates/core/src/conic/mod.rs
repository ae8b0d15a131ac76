//! Block-structured symmetric-cone programs and their solvers.

pub mod backend;
pub mod ipm;
pub mod ir;
pub mod program;

pub use backend::{Backend, Embedded, External};
pub use ipm::{solve, ConicSolution, Residuals, SolveStatus, SolverSettings};
pub use program::{
    BlockHandle, BlockInfo, ConicProgram, Constraint, EntryRef, LinearFunctional, PrimalPoint, SlackHandle, VarBlock,
};
