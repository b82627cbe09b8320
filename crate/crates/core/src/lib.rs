//! Contention-period analysis for 60 GHz WLANs whose access point serves
//! stations through time-shared quasi-omni sectors.
//!
//! - [`analytics`]: saturation fixed point and per-sector utilization.
//! - [`link_budget`]: conical-antenna link budget and beamwidth limits.
//! - [`allocator`]: adaptive and fixed sector plans.
//! - [`cbap`]: minimum contention-period duration per sector.
//! - [`scenario`]: seeded station layouts.
//! - [`sim`]: slot-level Monte Carlo check of the analytic model.
//! - [`experiment`]: sweeps, adaptive-vs-fixed comparison, validation.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod analytics;
pub mod cbap;
pub mod error;
pub mod experiment;
pub mod link_budget;
pub mod model;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
