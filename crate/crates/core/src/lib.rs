//! Relevant-difference testing for timing measurements.
//!
//! Given two series of timing observations (one per input class), the
//! detector decides whether any quantile of the two distributions differs by
//! more than a user-chosen negligibility threshold `delta`, while keeping the
//! type-1 error bounded for serially dependent measurements. The decision is
//! calibrated with a moving-block bootstrap whose block length is estimated
//! from the data.
//!
//! Modules, bottom-up:
//!
//! - [`ingest`]: text formats, validation, pairing and the discrete/continuous split.
//! - [`quantiles`]: rank-statistic and mid-distribution quantile estimators.
//! - [`dependence`]: automatic block-length selection.
//! - [`bootstrap`]: block bootstrap replicate matrices and their variances.
//! - [`detector`]: the filtered max-statistic test.
//! - [`power`]: sample-size estimation from a pilot sample.
//! - [`simulate`]: AR(1) ground truth and rejection-rate grids.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix the common `f64` instantiation.

// `!(a > b)` comparisons deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod dependence;
pub mod detector;
mod error;
pub mod ingest;
pub mod power;
pub mod quantiles;
mod scalar;
pub mod simulate;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use bootstrap::{BootstrapMatrix, Regime, VarianceVector};
pub use dependence::{BlockLengthConfig, DependenceEstimate};
pub use detector::{Decision, TestConfig, TestResult};
pub use ingest::{DataKind, Kind, MeasurementSeries, PairedSample, Unit};
pub use power::{PowerFormula, PowerRequest, PowerResult, SigmaVariant};
pub use quantiles::{QuantileLevels, QuantileVector};
pub use simulate::{Ar1Spec, GridSpec, RejectionSurface};

/// Version tag written into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

pub type Series = MeasurementSeries<f64>;
pub type Series32 = MeasurementSeries<f32>;
pub type Pair = PairedSample<f64>;
pub type Pair32 = PairedSample<f32>;
pub type Config = TestConfig<f64>;
pub type Config32 = TestConfig<f32>;
pub type Outcome = TestResult<f64>;
pub type Outcome32 = TestResult<f32>;
pub type Matrix = BootstrapMatrix<f64>;
pub type Matrix32 = BootstrapMatrix<f32>;
