//! Single-UAV tracking of drifting castaways.
//!
//! The crate is split along the data flow of one control cycle:
//!
//! * [`world`] generates ground-truth castaway drift from surface waves.
//! * [`agent`] holds the double-integrator UAV model and its bounds.
//! * [`sensor`] maps agent altitude to camera footprint, detection
//!   probability and measurement noise.
//! * [`estimator`] runs one intermittent-observation Kalman filter per target.
//! * [`planner`] searches for the control sequence that minimises the summed
//!   predicted covariance traces over a receding horizon.
//! * [`harness`] closes the loop, runs baselines and Monte Carlo sweeps.
//!
//! [`config`] ties the pieces together into a single versioned JSON document
//! and [`export`] holds the fixed CSV layouts.

// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Oracle constants keep every digit they were computed with.
#![cfg_attr(test, allow(clippy::excessive_precision))]

pub mod agent;
pub mod config;
pub mod error;
pub mod estimator;
pub mod export;
pub mod harness;
pub mod planner;
pub mod sensor;
pub mod world;

pub use error::{Error, Result};
