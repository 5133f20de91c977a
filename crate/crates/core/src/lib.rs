//! Sufficient dimension reduction by slicing the response: sliced inverse
//! regression (SIR), sliced average variance estimation (SAVE) and the
//! bias-corrected SAVE (CSAVE), with subspace-recovery metrics and a
//! reproducible Monte Carlo harness.

pub mod data;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod metrics;
pub mod simulation;
pub mod slicing;

pub use error::{ErrorKind, Result, SdrError};
