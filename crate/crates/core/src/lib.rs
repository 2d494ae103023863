//! Numerical workbench for single-beam dark toroidal optical traps.
//!
//! The pipeline runs from SLM phase-mask synthesis ([`fields`]) through
//! focal-volume propagation ([`propagation`]) and dipole potentials
//! ([`potential`]) to Monte Carlo atom dynamics ([`montecarlo`]) and
//! relaxation-curve fitting ([`analysis`]).

pub mod analysis;
pub mod constants;
pub mod error;
pub mod fields;
pub mod io;
pub mod montecarlo;
pub mod numeric;
pub mod potential;
pub mod propagation;
pub mod transform;

pub use error::{Error, Result};
