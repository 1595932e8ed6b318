//! Dyadic and sparse machinery for one and two weight norm inequalities of
//! Riesz potentials (fractional integrals) on discretized weights.
//!
//! The crate is organized bottom-up:
//!
//! - [`mesh`]: shifted dyadic grids over a truncated box, step functions
//!   and exact cube aggregation.
//! - [`orlicz`]: Young functions, Luxemburg norms, associates, `B_p`
//!   checks and the Orlicz maximal function.
//! - [`weights`]: exponent bookkeeping, weight characteristics and weight
//!   generators.
//! - [`operators`]: reference, dyadic and sparse Riesz potentials plus the
//!   maximal operators.
//! - [`sparse`]: sparse families, level-set estimates, the corona
//!   decomposition and Carleson checks.
//! - [`normest`]: testing constants, weak/strong norm lower bounds and the
//!   bound-sandwich experiments.

pub mod calibration;
pub mod error;
pub mod mesh;
pub mod normest;
pub mod operators;
pub mod orlicz;
pub mod sparse;
pub mod weights;

pub use error::{Error, Result};
pub use mesh::{DyadicCube, GridIndex, Mesh, PrefixSums, StepFunction};
pub use normest::{NormEstimate, TestingReport};
pub use operators::KernelMode;
pub use orlicz::YoungFunction;
pub use sparse::{CoronaDecomposition, SparseFamily};
pub use weights::{CharacteristicReport, ExponentTuple, WeightSpec};
