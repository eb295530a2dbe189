//! The RF tier end to end: synthesis, anti-alias filter and demodulation,
//! streamed block by block so that long runs stay within memory.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::ReadoutModel;
use crate::dsp::{calibrate, AntiAliasSpec, CalibrationScale, DemodConfig, Demodulator, DspError, FirFilter};
use crate::seed::{derive_seed, tag};
use crate::synth::{record_count, RfOptions, RfSynthesizer, SampleRecord, SynthError};
use crate::trajectory::TrajectorySpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("rate ordering violated: {0}")]
    Nyquist(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RfChainConfig {
    pub synth: RfOptions,
    pub antialias: AntiAliasSpec,
    pub demod: DemodConfig,
}

impl RfChainConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let fs = self.synth.sample_rate;
        if !(self.demod.f < self.antialias.corner && self.antialias.corner < fs / 2.0) {
            return Err(PipelineError::Nyquist(format!(
                "need f ({}) < anti-alias corner ({}) < sample_rate/2 ({})",
                self.demod.f,
                self.antialias.corner,
                fs / 2.0
            )));
        }
        self.demod.validate(fs)?;
        self.effective_synth()?.validate()?;
        Ok(())
    }

    /// Synthesis options tied to the demodulator: the noise level follows the
    /// analysis lowpass and the padding covers its support.
    fn effective_synth(&self) -> Result<RfOptions, PipelineError> {
        let fir = self.demod.fir.design()?;
        let needed = (fir.half_length() as f64 + 2.0) / fir.rate
            + self.demod.out_dt
            + 2.0 * self.antialias.taps as f64 / self.synth.sample_rate;
        Ok(RfOptions {
            reference_bandwidth: Some(
                self.synth.reference_bandwidth.unwrap_or_else(|| fir.noise_bandwidth()),
            ),
            pad: self.synth.pad.max(needed),
            ..self.synth.clone()
        })
    }

    /// Calibration implied by the chain's construction: the demodulated output
    /// is `sqrt(2)` vacuum units times the anti-alias gain at the carrier.
    pub fn nominal_calibration(&self) -> Result<CalibrationScale, PipelineError> {
        let taps = self.antialias.design(self.synth.sample_rate)?;
        let aa = FirFilter {
            taps,
            rate: self.synth.sample_rate,
        }
        .magnitude(self.demod.f);
        let scale = 0.5 / (aa * aa);
        Ok(CalibrationScale {
            scale_u: scale,
            scale_v: scale,
        })
    }
}

/// Raw (uncalibrated) records at `t_i = i * out_dt`, `i < round(duration / out_dt)`.
pub fn run_rf(
    model: &ReadoutModel,
    spec: &TrajectorySpec,
    duration: f64,
    seed: u64,
    chain: &RfChainConfig,
) -> Result<Vec<SampleRecord>, PipelineError> {
    chain.validate()?;
    let synth_opts = chain.effective_synth()?;
    let synth = RfSynthesizer::new(model, spec, duration, seed, &synth_opts)?;
    let fs = synth_opts.sample_rate;
    let n = record_count(duration, chain.demod.out_dt);

    let mut aa = [chain.antialias.streaming(fs)?, chain.antialias.streaming(fs)?];
    // Causal anti-alias output lags by `delay` samples.
    let first = synth.first_index() - aa[0].delay() as i64;
    let mut demod = [
        Demodulator::new(&chain.demod, fs, first, 0, n)?,
        Demodulator::new(&chain.demod, fs, first, 0, n)?,
    ];
    let mut out = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut filtered = Vec::new();
    for range in synth.blocks() {
        if demod.iter().all(Demodulator::is_done) {
            break;
        }
        let (one, two) = synth.block(range);
        for (ch, samples) in [one, two].iter().enumerate() {
            // Small pieces keep the filter passes in cache.
            for piece in samples.chunks(8192) {
                filtered.resize(piece.len(), 0.0);
                aa[ch].process(piece, &mut filtered);
                demod[ch].push(&filtered, &mut out[ch])?;
            }
        }
    }
    for d in &demod {
        d.finish()?;
    }
    let [u, v] = out;
    Ok(u.into_iter()
        .zip(v)
        .map(|((t, u), (_, v))| SampleRecord { t, u, v })
        .collect())
}

/// Shot-noise calibration of the RF chain from a `duration`-second run of
/// `vacuum` (an entanglement-off model) at zero displacement. The run uses its
/// own seed stream.
pub fn calibrate_rf(
    chain: &RfChainConfig,
    vacuum: &ReadoutModel,
    seed: u64,
    duration: f64,
) -> Result<CalibrationScale, PipelineError> {
    let spec = TrajectorySpec::zero(duration)
        .map_err(|_| SynthError::InvalidParameter("calibration duration must be positive"))?;
    let records = run_rf(vacuum, &spec, duration, derive_seed(seed, tag::CALIBRATION, 0), chain)?;
    Ok(calibrate(&records)?)
}
