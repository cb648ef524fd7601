//! Simulation and statistics for phase-mixed spectral photocurrents.
//!
//! The crate follows the measurement chain: a two-mode state ([`state`])
//! reaches two phase-locked photocurrent components through a measurement
//! model, the simulator ([`sim`]) mixes them over a random relative phase, and
//! [`analysis`] reads Gaussianity back out of the mixed samples. [`moments`]
//! holds the exact identities that connect the two ends, and [`io`] the file
//! formats and the run pipeline.

pub mod analysis;
pub mod error;
pub mod moments;
pub mod io;
pub mod sim;
pub mod state;

pub use error::{Error, Result};
