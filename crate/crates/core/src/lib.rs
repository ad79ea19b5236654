//! Reduced-order modeling for incompressible-flow quadratic DAEs
//!
//! ```text
//! E11 v' = A11 v + A12 p + H (v ⊗ v) + B1 u
//!      0 = A12ᵀ v + Bperp u⊥
//! ```
//!
//! The crate learns low-dimensional quadratic models from trajectories
//! (operator inference), builds intrusive POD-Galerkin models, and fits DMD
//! baselines for comparison. The `opinf` binary drives the whole pipeline.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dmd;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod model;
pub mod opinf;
pub mod pod;
pub mod simulate;
pub mod transform;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, Tolerance, Vector};
pub use model::{QuadDaeModel, ReducedQuadModel, SnapshotSet};
