//! Measurement records, two ways.
//!
//! The baseband tier draws each record directly from the readout model. The RF
//! tier synthesises the two photocurrents at the full sample rate so that the DSP
//! chain has something real to chew on.
//!
//! RF photocurrents are `i(t) = sqrt(2) [a(t) cos(2 pi f t) + b(t) sin(2 pi f t)]`.
//! `a` and `b` are built at `noise_oversample_rate` (`fn`) as mean plus white
//! Gaussian noise, then band-limited interpolated to the sample rate. The
//! per-sample noise variance is `noise_cov * fn / (2 B)` where `B` is the noise
//! bandwidth of the analysis lowpass. With the `2 cos` demodulator the raw
//! output is then `sqrt(2)` times vacuum-normalised units, i.e. a nominal
//! variance calibration of one half.

use std::f64::consts::{PI, SQRT_2, TAU};
use std::io::Write;

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{BenchError, ReadoutModel};
use crate::dsp::FirSpec;
use crate::seed::{stream_rng, tag};
use crate::trajectory::TrajectorySpec;

/// Records per seeding chunk; also the chunk length of the RF noise streams.
pub const CHUNK: usize = 1 << 16;

/// Interpolation intervals per chunk of the optional broadband floor.
const FLOOR_INTERVALS: i64 = 256;

/// RF synthesis proceeds in blocks of this many noise intervals.
const BLOCK_INTERVALS: i64 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("rate ordering violated: {0}")]
    Nyquist(String),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

/// One demodulated reading of both detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub t: f64,
    pub u: f64,
    pub v: f64,
}

/// Number of records in a run: `round(duration / dt)`, at `t_i = i dt`.
pub fn record_count(duration: f64, dt: f64) -> usize {
    (duration / dt).round() as usize
}

/// Fast tier: independent bivariate Gaussian records on the `dt` grid.
pub fn simulate_baseband(
    model: &ReadoutModel,
    spec: &TrajectorySpec,
    dt: f64,
    seed: u64,
) -> Result<Vec<SampleRecord>, SynthError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SynthError::InvalidParameter("dt must be positive"));
    }
    let factor = model.noise_factor()?;
    let n = record_count(spec.duration, dt);
    let chunks: Vec<Vec<SampleRecord>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, tag::BASEBAND, c as u64);
            (c * CHUNK..((c + 1) * CHUNK).min(n))
                .map(|i| {
                    let t = i as f64 * dt;
                    let (x, y) = spec.sample_clamped(t);
                    let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                    let r = model.readout_mean(x, y) + factor * z;
                    SampleRecord { t, u: r[0], v: r[1] }
                })
                .collect()
        })
        .collect();
    Ok(chunks.concat())
}

/// Sampled photocurrents of both detectors. Sample `j` is at
/// `start_time + j / sample_rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct RfTrace {
    pub sample_rate: f64,
    pub carrier_f: f64,
    pub start_time: f64,
    pub samples_bhd1: Vec<f64>,
    pub samples_bhd2: Vec<f64>,
}

impl RfTrace {
    /// Absolute sample index of the first sample (`start_time * sample_rate`).
    pub fn first_index(&self) -> i64 {
        (self.start_time * self.sample_rate).round() as i64
    }

    pub fn len(&self) -> usize {
        self.samples_bhd1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples_bhd1.is_empty()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.samples_bhd1.len() != self.samples_bhd2.len() {
            return Err(SynthError::InvalidParameter("channels must have equal length"));
        }
        if !(self.sample_rate > 2.0 * self.carrier_f && self.carrier_f > 0.0) {
            return Err(SynthError::Nyquist(format!(
                "sample rate {} must exceed twice the carrier {}",
                self.sample_rate, self.carrier_f
            )));
        }
        Ok(())
    }

    /// Interleaved `i1, i2` pairs as little-endian f64.
    pub fn write_raw<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(16 * 4096);
        for (pair1, pair2) in self.samples_bhd1.chunks(4096).zip(self.samples_bhd2.chunks(4096)) {
            buf.clear();
            for (a, b) in pair1.iter().zip(pair2) {
                buf.extend_from_slice(&a.to_le_bytes());
                buf.extend_from_slice(&b.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,i1,i2")?;
        let first = self.first_index();
        for (j, (a, b)) in self.samples_bhd1.iter().zip(&self.samples_bhd2).enumerate() {
            let t = (first + j as i64) as f64 / self.sample_rate;
            writeln!(out, "{t:.12e},{a:.16e},{b:.16e}")?;
        }
        Ok(())
    }
}

/// RF synthesis settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RfOptions {
    pub sample_rate: f64,
    pub carrier_f: f64,
    pub noise_oversample_rate: f64,
    /// Adds white noise of this standard deviation per full-rate sample.
    pub broadband_floor: Option<f64>,
    /// Noise bandwidth that maps `noise_cov` onto the baseband noise level. When
    /// absent, that of the default analysis lowpass.
    pub reference_bandwidth: Option<f64>,
    /// Test hook: `false` synthesises the mean signal only.
    pub noise_enabled: bool,
    /// Extra trace synthesised before `t = 0` and after the duration, seconds.
    pub pad: f64,
    /// Half-width of the interpolation kernel in noise samples.
    pub interp_half_width: usize,
}

impl Default for RfOptions {
    fn default() -> Self {
        Self {
            sample_rate: 2e8,
            carrier_f: 5e6,
            noise_oversample_rate: 1e6,
            broadband_floor: None,
            reference_bandwidth: None,
            noise_enabled: true,
            pad: 5e-4,
            interp_half_width: 4,
        }
    }
}

impl RfOptions {
    fn reference_bandwidth(&self) -> f64 {
        self.reference_bandwidth.unwrap_or_else(|| {
            FirSpec::default()
                .design()
                .expect("default lowpass is valid")
                .noise_bandwidth()
        })
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let ordering = |msg: String| Err(SynthError::Nyquist(msg));
        if !(self.carrier_f > 0.0 && self.sample_rate > 2.0 * self.carrier_f) {
            return ordering(format!(
                "sample rate {} must exceed twice the carrier {}",
                self.sample_rate, self.carrier_f
            ));
        }
        let fno = self.noise_oversample_rate;
        if !(fno > 0.0 && fno < 2.0 * self.carrier_f) {
            return ordering(format!(
                "noise rate {fno} must be positive and below twice the carrier {}",
                self.carrier_f
            ));
        }
        let b = self.reference_bandwidth();
        if !(b > 0.0 && fno > 2.0 * b) {
            return ordering(format!("noise rate {fno} must exceed twice the analysis bandwidth {b}"));
        }
        let ratio = self.sample_rate / fno;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return ordering(format!(
                "sample rate {} must be an integer multiple of the noise rate {fno}",
                self.sample_rate
            ));
        }
        if !(self.pad >= 0.0 && self.pad.is_finite()) {
            return Err(SynthError::InvalidParameter("pad must be non-negative"));
        }
        if self.interp_half_width == 0 {
            return Err(SynthError::InvalidParameter("interp_half_width must be at least 1"));
        }
        if let Some(s) = self.broadband_floor {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(SynthError::InvalidParameter("broadband_floor must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Per-phase interpolation weights, stored tap-major: `weights[k * L + p]`.
fn interpolation_kernel(l: usize, half: usize) -> Vec<f64> {
    let taps = 2 * half;
    let mut w = vec![0.0; taps * l];
    for p in 0..l {
        let frac = p as f64 / l as f64;
        let mut sum = 0.0;
        for k in 0..taps {
            let x = frac - (k as f64 - half as f64 + 1.0);
            let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
            let window = 0.5 * (1.0 + (PI * x / half as f64).cos());
            w[k * l + p] = sinc * window;
            sum += sinc * window;
        }
        for k in 0..taps {
            w[k * l + p] /= sum;
        }
    }
    w
}

/// Baseband envelopes `a`, `b` of both channels on the noise grid, already
/// multiplied by `sqrt(2)`.
struct Envelopes {
    base: i64,
    a: [Vec<f64>; 2],
    b: [Vec<f64>; 2],
}

/// Streaming RF synthesiser. Blocks can be produced in any order.
pub struct RfSynthesizer {
    options: RfOptions,
    seed: u64,
    l: usize,
    half: i64,
    n_first: i64,
    n_end: i64,
    kernel: Vec<f64>,
    carrier_cos: Vec<f64>,
    carrier_sin: Vec<f64>,
    cycles_per_interval: f64,
    env: Envelopes,
}

impl RfSynthesizer {
    pub fn new(
        model: &ReadoutModel,
        spec: &TrajectorySpec,
        duration: f64,
        seed: u64,
        options: &RfOptions,
    ) -> Result<Self, SynthError> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(SynthError::InvalidParameter("duration must be positive"));
        }
        options.validate()?;
        let fno = options.noise_oversample_rate;
        let l = (options.sample_rate / fno).round() as usize;
        let half = options.interp_half_width as i64;
        let n_first = -(options.pad * fno).ceil() as i64;
        let n_end = ((duration + options.pad) * fno).ceil() as i64 + 1;
        let env_base = n_first - half + 1;
        let env_len = (n_end + half - env_base) as usize;

        let factor = model.noise_factor()?;
        let level = (fno / (2.0 * options.reference_bandwidth())).sqrt();
        let chunk_lo = env_base.div_euclid(CHUNK as i64);
        let chunk_hi = (env_base + env_len as i64 - 1).div_euclid(CHUNK as i64);
        let noise: Vec<(i64, [Vec<f64>; 4])> = (chunk_lo..=chunk_hi)
            .into_par_iter()
            .map(|c| (c, noise_chunk(seed, c, &factor, level)))
            .collect();

        let mut a = [vec![0.0; env_len], vec![0.0; env_len]];
        let mut b = [vec![0.0; env_len], vec![0.0; env_len]];
        if options.noise_enabled {
            for (c, streams) in &noise {
                let chunk_start = c * CHUNK as i64;
                let lo = env_base.max(chunk_start);
                let hi = (env_base + env_len as i64).min(chunk_start + CHUNK as i64);
                for n in lo..hi {
                    let (i, s) = ((n - env_base) as usize, (n - chunk_start) as usize);
                    a[0][i] = streams[0][s];
                    a[1][i] = streams[1][s];
                    b[0][i] = streams[2][s];
                    b[1][i] = streams[3][s];
                }
            }
        }
        if !spec.is_zero() {
            for (i, n) in (env_base..env_base + env_len as i64).enumerate() {
                let (x, y) = spec.sample_clamped(n as f64 / fno);
                let m = model.readout_mean(x, y);
                a[0][i] += m[0];
                a[1][i] += m[1];
            }
        }
        for v in a.iter_mut().chain(b.iter_mut()) {
            v.iter_mut().for_each(|s| *s *= SQRT_2);
        }

        let cycles_per_sample = options.carrier_f / options.sample_rate;
        let kernel = interpolation_kernel(l, options.interp_half_width);
        let (carrier_cos, carrier_sin) = (0..l)
            .map(|p| (TAU * cycles_per_sample * p as f64).sin_cos())
            .map(|(s, c)| (c, s))
            .unzip();
        Ok(Self {
            seed,
            l,
            half,
            n_first,
            n_end,
            kernel,
            carrier_cos,
            carrier_sin,
            cycles_per_interval: options.carrier_f / fno,
            env: Envelopes { base: env_base, a, b },
            options: options.clone(),
        })
    }

    /// Absolute full-rate index of the first synthesised sample.
    pub fn first_index(&self) -> i64 {
        self.n_first * self.l as i64
    }

    pub fn start_time(&self) -> f64 {
        self.first_index() as f64 / self.options.sample_rate
    }

    /// Total number of full-rate samples per channel.
    pub fn len(&self) -> usize {
        (self.n_end - self.n_first) as usize * self.l
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Noise-interval ranges of the blocks, in order.
    pub fn blocks(&self) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        let mut lo = self.n_first;
        while lo < self.n_end {
            let hi = ((lo.div_euclid(BLOCK_INTERVALS) + 1) * BLOCK_INTERVALS).min(self.n_end);
            out.push((lo, hi));
            lo = hi;
        }
        out
    }

    /// Full-rate samples of both channels for noise intervals `lo..hi`.
    pub fn block(&self, (lo, hi): (i64, i64)) -> (Vec<f64>, Vec<f64>) {
        let l = self.l;
        let taps = 2 * self.half as usize;
        let len = (hi - lo) as usize * l;
        let mut out = [vec![0.0; len], vec![0.0; len]];
        let mut env_a = vec![0.0; l];
        let mut env_b = vec![0.0; l];
        for (ch, dest) in out.iter_mut().enumerate() {
            let (a, b) = (&self.env.a[ch], &self.env.b[ch]);
            for n in lo..hi {
                let base = (n - self.half + 1 - self.env.base) as usize;
                env_a.iter_mut().for_each(|v| *v = 0.0);
                env_b.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..taps {
                    let w = &self.kernel[k * l..(k + 1) * l];
                    let (ak, bk) = (a[base + k], b[base + k]);
                    for ((ea, eb), wk) in env_a.iter_mut().zip(env_b.iter_mut()).zip(w) {
                        *ea += wk * ak;
                        *eb += wk * bk;
                    }
                }
                let theta = TAU * (self.cycles_per_interval * n as f64).rem_euclid(1.0);
                let (st, ct) = theta.sin_cos();
                let offset = (n - lo) as usize * l;
                let slot = &mut dest[offset..offset + l];
                for p in 0..l {
                    let (ea, eb) = (env_a[p], env_b[p]);
                    slot[p] = self.carrier_cos[p] * (ea * ct + eb * st)
                        + self.carrier_sin[p] * (eb * ct - ea * st);
                }
            }
        }
        if let Some(std) = self.options.broadband_floor.filter(|s| *s > 0.0) {
            let per_chunk = FLOOR_INTERVALS as usize * l;
            for c in lo.div_euclid(FLOOR_INTERVALS)..=(hi - 1).div_euclid(FLOOR_INTERVALS) {
                for (ch, dest) in out.iter_mut().enumerate() {
                    let mut rng = stream_rng(self.seed, tag::RF_FLOOR ^ ch as u64, c as u64);
                    let chunk_lo = c * FLOOR_INTERVALS;
                    for s in 0..per_chunk {
                        let z: f64 = rng.sample(StandardNormal);
                        let n = chunk_lo + (s / l) as i64;
                        if n >= lo && n < hi {
                            dest[(n - lo) as usize * l + s % l] += std * z;
                        }
                    }
                }
            }
        }
        let [one, two] = out;
        (one, two)
    }

    /// Materialises the whole trace.
    pub fn trace(&self) -> RfTrace {
        let mut one = Vec::with_capacity(self.len());
        let mut two = Vec::with_capacity(self.len());
        for range in self.blocks() {
            let (a, b) = self.block(range);
            one.extend(a);
            two.extend(b);
        }
        RfTrace {
            sample_rate: self.options.sample_rate,
            carrier_f: self.options.carrier_f,
            start_time: self.start_time(),
            samples_bhd1: one,
            samples_bhd2: two,
        }
    }
}

/// One chunk of the four noise streams `a1, a2, b1, b2` (not yet scaled by sqrt 2).
fn noise_chunk(seed: u64, chunk: i64, factor: &Matrix2<f64>, level: f64) -> [Vec<f64>; 4] {
    let mut in_phase = stream_rng(seed, tag::RF_IN_PHASE, chunk as u64);
    let mut quadrature = stream_rng(seed, tag::RF_QUADRATURE, chunk as u64);
    let mut out: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(CHUNK));
    for _ in 0..CHUNK {
        for (rng, first) in [(&mut in_phase, 0), (&mut quadrature, 2)] {
            let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            let n = factor * z * level;
            out[first].push(n[0]);
            out[first + 1].push(n[1]);
        }
    }
    out
}

/// Faithful tier: full-rate photocurrents covering `[-pad, duration + pad]`.
pub fn synthesize_rf(
    model: &ReadoutModel,
    spec: &TrajectorySpec,
    duration: f64,
    seed: u64,
    options: &RfOptions,
) -> Result<RfTrace, SynthError> {
    Ok(RfSynthesizer::new(model, spec, duration, seed, options)?.trace())
}
