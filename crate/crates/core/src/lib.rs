//! Simulation and threshold estimation for bivariate jump-diffusions.
//!
//! * [`model`]: process description and the analytic tail/moment formulas of stable-like
//!   Lévy measures.
//! * [`simulate`]: exact-decomposition path simulation with Lévy-copula coupled jumps.
//! * [`estimate`]: threshold statistics `ṽ_{r,l}`, `w̃`, co-jump estimates and the
//!   normalized bias.
//! * [`experiments`]: Monte-Carlo harness for consistency, normality, limit and rate checks.
//! * [`io`]: CSV and config formats, tick-data alignment, run manifests.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimate;
pub mod experiments;
pub mod io;
pub mod model;
pub mod simulate;
pub mod stats;
pub mod sum;

pub use error::{Error, Result};
pub use estimate::{
    adjacent_stat, cojump_estimates, estimate, normalized_bias, realized_covariation,
    threshold_stat, EstimatorOptions, EstimatorReport, IncrementPair, Truncation,
};
pub use model::{
    CoefficientSpec, CopulaSpec, FiniteActivityJumpSpec, InfiniteActivityJumpSpec, ModelSpec,
    ThresholdRule,
};
pub use simulate::{assemble_paths, Grid, GroundTruth, JumpLedger, PathPair, SimConfig};
