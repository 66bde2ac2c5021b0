//! Dispatch and train-length scheduling for modular aerial pod transit on a
//! grid network.
//!
//! The pipeline runs [`network`] → [`demand`] → [`solver`], with
//! [`formulation`] scoring and checking candidates and [`linearization`]
//! producing a standard-form MILP for external solvers. [`harness`] wraps it
//! all in scenarios, sweeps and reports.

pub mod demand;
pub mod error;
pub mod formulation;
pub mod harness;
pub mod linearization;
pub mod network;
pub mod solver;

pub use error::{Error, Result};
