//! Minimum-entropy moment closures for the slab-geometry linear kinetic
//! transport equation.

pub mod basis;
pub mod closure;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod optimizer;
pub mod problems;
pub mod standard;
pub mod quadrature;
pub mod selftest;
pub mod transformed;

pub use basis::{BasisKind, MomentBasis, Realizability};
pub use error::{Error, Result};
pub use optimizer::{OptimizerConfig, SolveReport};
pub use linalg::{HessianFormat, HessianMatrix, SpdFailure};
pub use quadrature::Quadrature;
