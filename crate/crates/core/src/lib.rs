//! Run-to-run feedforward control of electromechanical switching actuators.
//!
//! The crate simulates a single-coil reluctance actuator, builds
//! flatness-based soft-landing feedforward signals parameterized by
//! dimensionless multipliers, adapts those multipliers once per operation
//! with a pattern search, and shrinks the search space using the sensitivity
//! of the feedforward law (index subsets or Fisher-matrix eigenvectors).

pub mod campaign;
pub mod cli;
pub mod config;
pub mod eigen;
pub mod error;
pub mod feedforward;
pub mod model;
pub mod optimizer;
pub mod plant;
pub mod sensitivity;
pub mod trajectory;

pub use error::{Error, Result};
