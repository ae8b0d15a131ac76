//! Convex relaxations for non-rigid structure-from-motion.

pub mod conic;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod lifting;
pub mod reconstruct;
pub mod synth;
pub mod tol;

pub use error::{Error, Result};
