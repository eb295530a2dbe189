//! Simulation of simultaneous conjugate-quadrature measurements on an
//! entanglement-assisted optical bench, from covariance matrices down to
//! demodulated photocurrent records.

pub mod analysis;
pub mod bench;
pub mod dsp;
pub mod gaussian;
pub mod pipeline;
pub mod runner;
pub mod scenario;
pub mod seed;
pub mod synth;
pub mod trajectory;
