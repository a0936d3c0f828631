//! Iterative and direct solvers used by the discretizations.

pub mod dense;
pub mod krylov;
pub mod multigrid;
pub mod spectral;

pub use krylov::{minres, pcg, SolveStats};
pub use multigrid::{Multigrid, Stencil};
