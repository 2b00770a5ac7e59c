//! Generalised (β-divergence) sequential Monte Carlo for state-space models.
//!
//! The crate provides bootstrap, generic and auxiliary particle filters whose
//! weights come from a [`models::GeneralisedLikelihood`], exact Kalman and RTS
//! recursions, FFBS smoothing, benchmark simulators, and evaluation metrics.

pub mod error;
pub mod filters;
pub mod kalman;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod selection;
pub mod simulators;
pub mod smoothing;
pub mod stats;

pub use error::{Error, Result};
