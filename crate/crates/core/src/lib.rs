//! Constrained Cramér-Rao bounds for sparse linear models, the estimators
//! they are compared against, and a seeded Monte Carlo harness.
//!
//! Indices are zero-based throughout the library.

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod io;
pub mod matkernel;
pub mod model;
pub mod seed;
pub mod simulation;

pub use error::{Error, Result};
pub use estimators::{EstimateRecord, EstimatorKind, SolverConfig};
pub use matkernel::{RankTolerance, RealMatrix, RealVector};
pub use model::{ProblemInstance, SignalModel, SparkValue};
pub use simulation::{SweepReport, TrialPlan};
