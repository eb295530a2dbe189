use serde::{Deserialize, Serialize};

use super::fir::{lowpass, StreamingFir, Window};
use super::DspError;
use crate::synth::RfTrace;

fn default_corner() -> f64 {
    5e7
}

fn default_taps() -> usize {
    15
}

/// Digital stand-in for the analogue anti-alias filter: a linear-phase
/// windowed-sinc lowpass at the full sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntiAliasSpec {
    #[serde(default = "default_corner")]
    pub corner: f64,
    #[serde(default = "default_taps")]
    pub taps: usize,
}

impl Default for AntiAliasSpec {
    fn default() -> Self {
        Self {
            corner: default_corner(),
            taps: default_taps(),
        }
    }
}

impl AntiAliasSpec {
    pub fn design(&self, sample_rate: f64) -> Result<Vec<f64>, DspError> {
        if !(self.corner > 0.0 && self.corner < sample_rate / 2.0) {
            return Err(DspError::Nyquist(format!(
                "anti-alias corner {} must lie in (0, {})",
                self.corner,
                sample_rate / 2.0
            )));
        }
        if self.taps % 2 == 0 {
            return Err(DspError::InvalidParameter("antialias.taps must be odd"));
        }
        Ok(lowpass(self.corner / sample_rate, self.taps, Window::Hamming))
    }

    pub fn streaming(&self, sample_rate: f64) -> Result<StreamingFir, DspError> {
        Ok(StreamingFir::new(self.design(sample_rate)?))
    }
}

/// Zero-phase anti-alias filtering of a whole trace; the ends are extended by
/// holding the first and last samples.
pub fn antialias(trace: &RfTrace, spec: &AntiAliasSpec) -> Result<RfTrace, DspError> {
    let taps = spec.design(trace.sample_rate)?;
    let filter = |x: &[f64]| -> Vec<f64> {
        let half = (taps.len() - 1) / 2;
        let n = x.len() as isize;
        (0..n)
            .map(|i| {
                taps.iter()
                    .enumerate()
                    .map(|(k, h)| {
                        let j = (i + half as isize - k as isize).clamp(0, n - 1);
                        h * x[j as usize]
                    })
                    .sum()
            })
            .collect()
    };
    Ok(RfTrace {
        samples_bhd1: filter(&trace.samples_bhd1),
        samples_bhd2: filter(&trace.samples_bhd2),
        ..trace.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, n: usize) -> RfTrace {
        let fs = 2e8;
        let s: Vec<f64> = (0..n).map(|j| (2.0 * PI * freq * j as f64 / fs).cos()).collect();
        RfTrace {
            sample_rate: fs,
            carrier_f: 5e6,
            start_time: 0.0,
            samples_bhd1: s.clone(),
            samples_bhd2: s,
        }
    }

    fn amplitude(x: &[f64]) -> f64 {
        // RMS over the interior, times sqrt(2).
        let inner = &x[200..x.len() - 200];
        (inner.iter().map(|v| v * v).sum::<f64>() / inner.len() as f64 * 2.0).sqrt()
    }

    fn response_db(taps: &[f64], freq: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * freq / fs;
        let (re, im) = taps.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, h)| {
            (re + h * (w * n as f64).cos(), im - h * (w * n as f64).sin())
        });
        20.0 * re.hypot(im).log10()
    }

    #[test]
    fn carrier_passes_flat() {
        let input = tone(5e6, 4000);
        let out = antialias(&input, &AntiAliasSpec::default()).unwrap();
        let change = 20.0 * (amplitude(&out.samples_bhd1) / amplitude(&input.samples_bhd1)).log10();
        assert!(change.abs() < 0.1, "{change} dB");
    }

    #[test]
    fn eighty_megahertz_is_suppressed() {
        let taps = AntiAliasSpec::default().design(2e8).unwrap();
        assert!(response_db(&taps, 8e7, 2e8) <= -20.0);
        let out = antialias(&tone(8e7, 4000), &AntiAliasSpec::default()).unwrap();
        assert!(20.0 * amplitude(&out.samples_bhd1).log10() <= -20.0);
    }

    #[test]
    fn dc_preserved() {
        let mut t = tone(0.0, 500);
        t.samples_bhd1.iter_mut().for_each(|v| *v = 0.37);
        let out = antialias(&t, &AntiAliasSpec::default()).unwrap();
        for v in &out.samples_bhd1 {
            assert!((v / 0.37 - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn corner_must_be_below_nyquist() {
        let spec = AntiAliasSpec { corner: 1.2e8, taps: 15 };
        assert!(matches!(antialias(&tone(5e6, 100), &spec), Err(DspError::Nyquist(_))));
    }
}
