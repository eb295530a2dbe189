//! Post-processing of the photocurrents: anti-alias filtering, digital
//! demodulation at the carrier, FIR lowpass, decimation and shot-noise
//! calibration.
//!
//! The demodulator runs in two stages. Mixing with `2 cos(2 pi f t + phase)` is
//! followed by a boxcar average that decimates the full-rate stream down to the
//! FIR rate (`FirSpec::rate`). The boxcar has exact nulls at every multiple of the
//! FIR rate, i.e. at every frequency that would alias onto DC, including the `2f`
//! mixing product. The windowed-sinc FIR then band-limits to the analysis band and
//! is evaluated only on the output grid.

mod antialias;
mod calibrate;
mod demod;
mod fir;

pub use antialias::{antialias, AntiAliasSpec};
pub use calibrate::{calibrate, CalibrationScale, MIN_CALIBRATION_RECORDS};
pub use demod::{demodulate, DemodConfig, Demodulator};
pub use fir::{fir_response, lowpass, FirFilter, FirSpec, StreamingFir, Window};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("rate ordering violated: {0}")]
    Nyquist(String),
    #[error("{got} records supplied, need at least {need}")]
    TooFewRecords { got: usize, need: usize },
    #[error("input has zero variance; cannot calibrate")]
    ZeroVariance,
    #[error("record {index} lacks filter history; trace starts too late")]
    InsufficientHistory { index: usize },
    #[error("stream ended before record {index} could be formed")]
    Incomplete { index: usize },
}
