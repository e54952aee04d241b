//! Locally optimal continuous experimental designs.
//!
//! The crate computes designs that minimise a scalar criterion of the Fisher
//! information matrix of a parametric model. Three algorithms are provided:
//!
//! * [`algorithms::run_vdm`]: vertex direction method on a fixed grid,
//! * [`algorithms::run_ybt`]: exchange method that re-optimises all weights
//!   over a growing candidate set,
//! * [`algorithms::run_adagpr`]: adaptive discretization on the continuous
//!   design space, where a Gaussian-process surrogate of the directional
//!   derivative decides which point to evaluate next.
//!
//! Models live in [`models`]; the bundled ones are a quadratic toy model, a
//! two-component bubble-point flash and a fed-batch yeast fermentation.
//!
//! Inner loops over grids, Jacobian batches and optimizer restarts run on
//! rayon when the `parallel` feature is enabled (the default). Every parallel
//! map collects in input order, so results are identical either way.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod algorithms;
pub mod bounded;
pub mod design;
pub mod error;
pub mod gpr;
pub mod models;
pub mod parallel;
pub mod sobol;
pub mod weights;

pub use design::{Criterion, Design, DesignPoint, FisherMatrix, SigmaEps};
pub use error::{OedError, Result};
pub use parallel::Execution;
