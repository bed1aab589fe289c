//! Sparse linear regression with piecewise nonconvex penalties.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod crossval;
pub mod datagen;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod penalty;
pub mod problem;
pub mod quadrature;
pub mod replica;
pub mod rng;
pub mod solver;

pub use ensemble::EnsembleParams;
pub use error::{Error, Result};
pub use penalty::{PenaltyKind, PenaltySpec};
pub use problem::RegressionProblem;
