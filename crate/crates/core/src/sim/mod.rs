//! Monte-Carlo generation of phase-mixed photocurrent samples.
//!
//! All randomness is drawn from chunked, seed-derived streams (see [`rng`]),
//! so every output is a pure function of its inputs and seed.

mod demod;
mod masquerade;
mod mixing;
pub mod rng;
mod sampling;
mod scan;

pub use demod::{synthesize_and_demodulate, BackgroundNoise, DemodConfig, Demodulator, LowPassFilter};
pub use masquerade::build_masquerade_state;
pub use mixing::{phase_mix, phase_mix_quadrature_pair, PhaseMixingModel};
pub use sampling::{apply_measurement, sample_components, sample_quadratures};
pub use scan::{detuning_scan, linear_grid, phase_scan, scan, ScanPoint};
