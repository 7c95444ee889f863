//! Simulation and cost estimation for dihedral coset problem algorithms.

pub mod cost_models;
pub mod dcp_core;
pub mod dcp_solvers;
pub mod error;
pub mod sieve;
pub mod subset_sum;

pub use error::{Error, Result};
