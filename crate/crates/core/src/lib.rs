//! Pseudo-spectral simulation of stochastic Oldroyd-type viscoelastic flow on
//! a periodic box, driven by Q-Wiener, scalar Stratonovich and compensated
//! Poisson noise, together with the experiment harness that checks its energy
//! structure, stopping-time statistics and refinement behaviour.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod monitor;
pub mod noise;
pub mod spectral;

pub use error::{Error, Result};
