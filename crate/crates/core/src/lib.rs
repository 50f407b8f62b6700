//! Two-sided proper orthogonal decomposition and discrete empirical
//! interpolation for matrix-valued semilinear evolution problems
//! `U' = AU + UB + F(U, t)`.
//!
//! The state is kept as an `n₁ × n₂` matrix throughout: snapshots are
//! compressed into a left/right basis pair, the nonlinearity is interpolated
//! on a few selected rows and columns, and the reduced `k₁ × k₂` system is
//! advanced with exponential Euler. Everything is generic over [`Real`];
//! the `*F64` aliases below cover the common case.

pub mod deim;
pub mod error;
pub mod full;
pub mod io;
pub mod linalg;
pub mod memory;
pub mod pipeline;
pub mod pod;
pub mod problems;
pub mod rom;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ProblemF64 = problems::ProblemSpec<f64>;
pub type BasisPairF64 = pod::BasisPair<f64>;
pub type DeimOperatorF64 = deim::DeimOperator<f64>;
pub type ReducedModelF64 = rom::ReducedModel<f64>;
pub type OfflineF64 = pipeline::Offline<f64>;
