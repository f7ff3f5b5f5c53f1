//! Joint MMSE transceiver design for multi-sensor MIMO fusion networks.
//!
//! A set of sensors observes a common vector source, linearly precodes the
//! observations, and transmits them over a coherent multiple-access channel to
//! a fusion center that applies a linear receiver. This crate designs the
//! precoders and the receiver jointly, minimizing the total mean squared
//! estimation error subject to per-sensor transmit power limits, by block
//! coordinate descent: the receiver update is the closed-form Wiener filter,
//! and each precoder update is a quadratically constrained quadratic program
//! solved either exactly in closed form (eigendecomposition plus a scalar
//! multiplier search), jointly across sensors (log-barrier interior point), or
//! inexactly (proximal and structure-dropping approximations).
//!
//! Module map:
//! - [`model`]: system description, MSE and power evaluation, Wiener receiver,
//!   and the Kronecker-product quadratic form over stacked precoder vectors.
//! - [`subproblem`]: the single-sensor power-constrained update in closed form.
//! - [`jointsolver`]: the all-sensors update as one convex QCQP.
//! - [`bcd`]: the coordinate-descent drivers, update schedules, and traces.
//! - [`experiments`]: Monte-Carlo sweeps, reproducible channel draws, CSV
//!   export, and the configuration format used by the CLI.

pub mod bcd;
pub mod error;
pub mod experiments;
pub mod jointsolver;
pub mod linalg;
pub mod model;
pub mod sampling;
pub mod subproblem;

#[cfg(feature = "oracle")]
pub mod oracle;

pub use error::{Error, Result};
