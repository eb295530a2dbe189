use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::fir::{FirFilter, FirSpec};
use super::DspError;
use crate::synth::{RfTrace, SampleRecord};

fn default_carrier() -> f64 {
    5e6
}

fn default_out_dt() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemodConfig {
    /// Demodulation frequency in Hz.
    #[serde(default = "default_carrier")]
    pub f: f64,
    /// Electronic demodulation phase in radians, applied to both channels.
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub fir: FirSpec,
    /// Output record spacing in seconds.
    #[serde(default = "default_out_dt")]
    pub out_dt: f64,
}

impl Default for DemodConfig {
    fn default() -> Self {
        Self {
            f: default_carrier(),
            phase: 0.0,
            fir: FirSpec::default(),
            out_dt: default_out_dt(),
        }
    }
}

fn integer_ratio(a: f64, b: f64) -> Option<i64> {
    let r = a / b;
    let n = r.round();
    ((r - n).abs() < 1e-9 * n.max(1.0) && n >= 1.0).then_some(n as i64)
}

impl DemodConfig {
    /// Checks rate ordering against the input `sample_rate`.
    pub fn validate(&self, sample_rate: f64) -> Result<(), DspError> {
        self.fir.validate()?;
        if !(self.f > 0.0 && self.f < sample_rate / 2.0) {
            return Err(DspError::Nyquist(format!(
                "demodulation frequency {} must lie in (0, {})",
                self.f,
                sample_rate / 2.0
            )));
        }
        if self.f <= self.fir.cutoff {
            return Err(DspError::Nyquist(format!(
                "demodulation frequency {} must exceed the FIR cutoff {}",
                self.f, self.fir.cutoff
            )));
        }
        if integer_ratio(sample_rate, self.fir.rate).is_none() {
            return Err(DspError::Nyquist(format!(
                "sample rate {sample_rate} must be an integer multiple of the FIR rate {}",
                self.fir.rate
            )));
        }
        if !(self.out_dt > 0.0) || integer_ratio(self.out_dt * self.fir.rate, 1.0).is_none() {
            return Err(DspError::Nyquist(format!(
                "output spacing {} must be a whole number of FIR-rate samples",
                self.out_dt
            )));
        }
        if self.out_dt > 1.0 / (2.0 * self.fir.cutoff) {
            return Err(DspError::Nyquist(format!(
                "output spacing {} undersamples the {} Hz band",
                self.out_dt, self.fir.cutoff
            )));
        }
        Ok(())
    }
}

/// Streaming single-channel demodulator: mix, boxcar-decimate to the FIR rate,
/// FIR lowpass, and pick samples on the output grid.
///
/// Input sample `j` (counted from `first_index`) is taken to be at time `j / fs`.
/// Record `k` is centred on `k * out_dt`, so the FIR group delay is compensated.
#[derive(Debug, Clone)]
pub struct Demodulator {
    fir: FirFilter,
    half_fir: i64,
    boxcar: i64,
    half_box: i64,
    decim: i64,
    out_dt: f64,
    cycles_per_sample: f64,
    phase: f64,
    fixed_carrier: Option<Vec<f64>>,
    carrier: Vec<f64>,
    next_j: i64,
    window: i64,
    window_fill: i64,
    window_full: bool,
    acc: f64,
    inter: Vec<f64>,
    inter_base: i64,
    first_record: i64,
    n_records: usize,
    emitted: usize,
}

impl Demodulator {
    /// Demodulator for records `first_record .. first_record + n_records`.
    pub fn new(
        config: &DemodConfig,
        sample_rate: f64,
        first_index: i64,
        first_record: i64,
        n_records: usize,
    ) -> Result<Self, DspError> {
        config.validate(sample_rate)?;
        let fir = config.fir.design()?;
        let boxcar = integer_ratio(sample_rate, config.fir.rate).expect("validated");
        let decim = integer_ratio(config.out_dt * config.fir.rate, 1.0).expect("validated");
        let cycles_per_sample = config.f / sample_rate;
        let half_box = boxcar / 2;
        // When a whole number of carrier cycles fits in one boxcar the carrier is
        // identical in every window.
        let fixed_carrier = integer_ratio(config.f * boxcar as f64, sample_rate)
            .filter(|c| (*c as f64 - config.f * boxcar as f64 / sample_rate).abs() < 1e-9)
            .map(|_| carrier_window(cycles_per_sample, config.phase, -half_box, boxcar as usize));
        let window = (first_index + half_box).div_euclid(boxcar);
        let window_start = window * boxcar - half_box;
        let mut demod = Self {
            half_fir: fir.half_length() as i64,
            fir,
            boxcar,
            half_box,
            decim,
            out_dt: config.out_dt,
            cycles_per_sample,
            phase: config.phase,
            fixed_carrier,
            carrier: Vec::new(),
            next_j: first_index,
            window,
            window_fill: first_index - window_start,
            window_full: first_index == window_start,
            acc: 0.0,
            inter: Vec::new(),
            inter_base: 0,
            first_record,
            n_records,
            emitted: 0,
        };
        demod.load_carrier();
        Ok(demod)
    }

    fn load_carrier(&mut self) {
        if self.fixed_carrier.is_none() && self.window_full {
            let start = self.window * self.boxcar - self.half_box;
            self.carrier = carrier_window(self.cycles_per_sample, self.phase, start, self.boxcar as usize);
        }
    }

    pub fn records_emitted(&self) -> usize {
        self.emitted
    }

    pub fn is_done(&self) -> bool {
        self.emitted == self.n_records
    }

    /// Feeds the next samples; completed records `(t, value)` are appended to `out`.
    pub fn push(&mut self, samples: &[f64], out: &mut Vec<(f64, f64)>) -> Result<(), DspError> {
        let mut i = 0;
        while i < samples.len() {
            let take = ((self.boxcar - self.window_fill) as usize).min(samples.len() - i);
            if self.window_full {
                let carrier = self.fixed_carrier.as_deref().unwrap_or(&self.carrier);
                let off = self.window_fill as usize;
                self.acc += carrier[off..off + take]
                    .iter()
                    .zip(&samples[i..i + take])
                    .map(|(c, x)| c * x)
                    .sum::<f64>();
            }
            i += take;
            self.next_j += take as i64;
            self.window_fill += take as i64;
            if self.window_fill == self.boxcar {
                if self.window_full {
                    let value = self.acc / self.boxcar as f64;
                    self.push_intermediate(self.window, value, out)?;
                }
                self.window += 1;
                self.window_fill = 0;
                self.window_full = true;
                self.acc = 0.0;
                self.load_carrier();
            }
        }
        Ok(())
    }

    fn push_intermediate(&mut self, m: i64, value: f64, out: &mut Vec<(f64, f64)>) -> Result<(), DspError> {
        if self.inter.is_empty() || m != self.inter_base + self.inter.len() as i64 {
            self.inter.clear();
            self.inter_base = m;
        }
        self.inter.push(value);
        let last = self.inter_base + self.inter.len() as i64 - 1;
        while self.emitted < self.n_records {
            let k = self.first_record + self.emitted as i64;
            let centre = k * self.decim;
            if last < centre + self.half_fir {
                break;
            }
            let lo = centre - self.half_fir;
            if lo < self.inter_base {
                return Err(DspError::InsufficientHistory { index: self.emitted });
            }
            let start = (lo - self.inter_base) as usize;
            let window = &self.inter[start..start + self.fir.taps.len()];
            let y: f64 = self.fir.taps.iter().zip(window).map(|(h, x)| h * x).sum();
            out.push((k as f64 * self.out_dt, y));
            self.emitted += 1;
        }
        // Keep the buffer bounded.
        let keep_from = (self.first_record + self.emitted as i64) * self.decim - self.half_fir;
        let drop = (keep_from - self.inter_base).clamp(0, self.inter.len() as i64) as usize;
        if drop > 4096 {
            self.inter.drain(..drop);
            self.inter_base += drop as i64;
        }
        Ok(())
    }

    /// Ensures every requested record was produced.
    pub fn finish(&self) -> Result<(), DspError> {
        if self.is_done() {
            Ok(())
        } else {
            Err(DspError::Incomplete { index: self.emitted })
        }
    }
}

/// `2 cos(2 pi (cycles * j) + phase)` for `j = start .. start + len`.
fn carrier_window(cycles_per_sample: f64, phase: f64, start: i64, len: usize) -> Vec<f64> {
    (0..len as i64)
        .map(|i| {
            let cycles = (cycles_per_sample * (start + i) as f64).rem_euclid(1.0);
            2.0 * (TAU * cycles + phase).cos()
        })
        .collect()
}

/// Demodulates both channels of a complete trace. Produces every record on the
/// `k * out_dt` grid (`k >= 0`) whose filter support lies inside the trace.
pub fn demodulate(trace: &RfTrace, config: &DemodConfig) -> Result<Vec<SampleRecord>, DspError> {
    config.validate(trace.sample_rate)?;
    if trace.samples_bhd1.len() != trace.samples_bhd2.len() {
        return Err(DspError::InvalidParameter("channels must have equal length"));
    }
    let fs = trace.sample_rate;
    let boxcar = integer_ratio(fs, config.fir.rate).expect("validated");
    let decim = integer_ratio(config.out_dt * config.fir.rate, 1.0).expect("validated");
    let half_box = boxcar / 2;
    let half_fir = config.fir.design()?.half_length() as i64;
    let first = trace.first_index();
    let last = first + trace.samples_bhd1.len() as i64 - 1;
    let m_min = (first + half_box + boxcar - 1).div_euclid(boxcar);
    let m_max = (last + half_box + 1).div_euclid(boxcar) - 1;
    let k_min = ((m_min + half_fir) as f64 / decim as f64).ceil().max(0.0) as i64;
    let k_max = ((m_max - half_fir) as f64 / decim as f64).floor() as i64;
    let n = if k_max >= k_min { (k_max - k_min + 1) as usize } else { 0 };

    let run = |samples: &[f64]| -> Result<Vec<(f64, f64)>, DspError> {
        let mut d = Demodulator::new(config, fs, first, k_min, n)?;
        let mut out = Vec::with_capacity(n);
        d.push(samples, &mut out)?;
        d.finish()?;
        Ok(out)
    };
    let u = run(&trace.samples_bhd1)?;
    let v = run(&trace.samples_bhd2)?;
    Ok(u.into_iter()
        .zip(v)
        .map(|((t, u), (_, v))| SampleRecord { t, u, v })
        .collect())
}
