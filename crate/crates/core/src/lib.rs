//! Lattice workbench for the perturbed Vafa-Witten equations on a periodic
//! four-dimensional grid with gauge algebra su(2).
//!
//! - [`algebra`]: pointwise su(2) and self-dual two-form algebra, the
//!   twelve-dimensional `L_{B,C}` operator and its determinant.
//! - [`lattice`]: grids, fields, covariant difference operators and the
//!   `VWF1` container.
//! - [`vwmap`]: the map, its linearization and exact transposes.
//! - [`solver`]: residual minimization and singular-value probes.
//! - [`oracle`]: independent verifiers and seeded generators.

pub mod algebra;
pub mod error;
pub mod lattice;
pub mod oracle;
pub mod solver;
pub mod vwmap;

pub use error::{Error, Result};
