//! Sparse low-rank matrix completion with structured missing patterns.
//!
//! The solvers recover a low-rank matrix from a subset of its entries when
//! the unobserved entries are expected to be mostly zero:
//!
//! * [`sirls::solve_sirls`]: gradient projection on a smoothed Schatten-p
//!   surrogate (baseline).
//! * [`structured::solve_structured_sirls`]: the same low-rank steps
//!   alternated with reweighted ℓq shrinkage of the missing entries.
//! * [`exact`]: small-scale exact solvers used as references.
//!
//! [`harness`] runs sampling-rate grids over synthetic problems and writes
//! CSV tables and PGM heatmaps.

pub mod cli;
pub mod error;
pub mod exact;
pub mod generators;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod sampling;
pub mod sirls;
pub mod structured;

pub use error::{Error, Result};
