//! Numerical homogenization of compressible viscous flow in perforated
//! domains.
//!
//! The crate covers the periodic Stokes cell problem and its permeability
//! tensor, the Darcy / porous-medium limit system, the scaled compressible
//! Navier–Stokes equations on ε-periodically perforated grids, the two-scale
//! correctors with their boundary layer, and the relative-energy diagnostics
//! used to measure convergence rates in ε.
//!
//! All solvers are generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`); the aliases at the crate root fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cell_problem;
pub mod correctors;
pub mod error;
pub mod geometry;
pub mod lattice;
pub mod limit_solver;
pub mod linalg;
pub mod mac;
pub mod nse_solver;
pub mod pipeline;
pub mod pressure_law;
pub mod scalar;

pub use error::{Error, Result};
pub use geometry::{build_perforated_grid, build_reference_cell, make_obstacle, CellGrid, DomainKind, Obstacle, PerforatedGrid, Shape};
pub use lattice::{Boundary, FaceField, Lattice, Stagger};
pub use mac::MacGrid;
pub use pressure_law::Order;
pub use scalar::Real;

pub type PressureLaw = pressure_law::PressureLaw<f64>;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
