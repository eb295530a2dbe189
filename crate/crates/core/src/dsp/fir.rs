//! Windowed-sinc FIR lowpass design, its analytic frequency response, and a
//! streaming direct-form filter.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::DspError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hamming,
    Hann,
    Blackman,
}

impl Window {
    /// Symmetric window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        let denom = (n - 1) as f64;
        (0..n)
            .map(|i| {
                let x = 2.0 * PI * i as f64 / denom;
                match self {
                    Window::Hamming => 0.54 - 0.46 * x.cos(),
                    Window::Hann => 0.5 - 0.5 * x.cos(),
                    Window::Blackman => 0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos(),
                }
            })
            .collect()
    }

    /// Approximate transition width times length, in units of the sample rate.
    fn transition_factor(self) -> f64 {
        match self {
            Window::Hamming => 3.3,
            Window::Hann => 3.1,
            Window::Blackman => 5.5,
        }
    }
}

fn default_cutoff() -> f64 {
    1e4
}
fn default_transition() -> f64 {
    5e3
}
fn default_rate() -> f64 {
    1e6
}

/// Lowpass specification. `rate` is the sample rate the filter runs at, i.e. the
/// demodulated rate after the first decimation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirSpec {
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default = "default_transition")]
    pub transition_width: f64,
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default)]
    pub window: Window,
    /// Overrides the length derived from `transition_width`. Must be odd.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taps: Option<usize>,
}

impl Default for FirSpec {
    fn default() -> Self {
        Self {
            cutoff: default_cutoff(),
            transition_width: default_transition(),
            rate: default_rate(),
            window: Window::Hamming,
            taps: None,
        }
    }
}

impl FirSpec {
    pub fn validate(&self) -> Result<(), DspError> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(DspError::InvalidParameter("fir.rate must be positive"));
        }
        if !(self.cutoff > 0.0 && self.cutoff < self.rate / 2.0) {
            return Err(DspError::InvalidParameter("fir.cutoff must lie in (0, rate/2)"));
        }
        if !(self.transition_width > 0.0 && self.transition_width.is_finite()) {
            return Err(DspError::InvalidParameter("fir.transition_width must be positive"));
        }
        if let Some(n) = self.taps {
            if n % 2 == 0 {
                return Err(DspError::InvalidParameter("fir.taps must be odd"));
            }
        }
        Ok(())
    }

    /// Number of taps: the override, or the smallest odd length meeting the
    /// transition width for the chosen window.
    pub fn tap_count(&self) -> usize {
        if let Some(n) = self.taps {
            return n;
        }
        let n = (self.window.transition_factor() * self.rate / self.transition_width).ceil() as usize;
        n | 1
    }

    pub fn design(&self) -> Result<FirFilter, DspError> {
        self.validate()?;
        Ok(FirFilter {
            taps: lowpass(self.cutoff / self.rate, self.tap_count(), self.window),
            rate: self.rate,
        })
    }
}

/// Windowed-sinc lowpass with normalised cutoff `fc` (cycles/sample), unity DC gain.
pub fn lowpass(fc: f64, n: usize, window: Window) -> Vec<f64> {
    let centre = (n as f64 - 1.0) / 2.0;
    let mut taps: Vec<f64> = window
        .coefficients(n)
        .into_iter()
        .enumerate()
        .map(|(i, w)| {
            let x = i as f64 - centre;
            let ideal = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * x).sin() / (PI * x)
            };
            ideal * w
        })
        .collect();
    for i in 0..n / 2 {
        taps[n - 1 - i] = taps[i];
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Designed taps together with the rate they run at.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub rate: f64,
}

impl FirFilter {
    /// Complex response magnitude at `freq` Hz.
    pub fn magnitude(&self, freq: f64) -> f64 {
        let w = 2.0 * PI * freq / self.rate;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (n, h)| {
                let (s, c) = (w * n as f64).sin_cos();
                (re + h * c, im - h * s)
            });
        re.hypot(im)
    }

    /// Half the number of taps beyond the centre tap.
    pub fn half_length(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// One-sided noise-equivalent bandwidth in Hz (unity DC gain assumed).
    pub fn noise_bandwidth(&self) -> f64 {
        0.5 * self.rate * self.taps.iter().map(|h| h * h).sum::<f64>()
    }

    pub fn write_taps_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,tap")?;
        for (i, h) in self.taps.iter().enumerate() {
            writeln!(out, "{i},{h:.17e}")?;
        }
        Ok(())
    }
}

/// Response of the designed filter at `freq`, in dB relative to unity gain.
pub fn fir_response(filter: &FirFilter, freq: f64) -> Result<f64, DspError> {
    if !(freq >= 0.0) {
        return Err(DspError::InvalidParameter("frequency must be non-negative"));
    }
    Ok(20.0 * filter.magnitude(freq).log10())
}

/// Causal direct-form FIR over a sample stream; introduces `half_length` samples
/// of delay for symmetric taps.
#[derive(Debug, Clone)]
pub struct StreamingFir {
    taps: Vec<f64>,
    buffer: Vec<f64>,
}

impl StreamingFir {
    pub fn new(taps: Vec<f64>) -> Self {
        let history = taps.len().saturating_sub(1);
        Self {
            taps,
            buffer: vec![0.0; history],
        }
    }

    pub fn delay(&self) -> usize {
        self.taps.len().saturating_sub(1) / 2
    }

    /// Filters `input` into `output` (same length), keeping state across calls.
    pub fn process(&mut self, input: &[f64], output: &mut [f64]) {
        assert_eq!(input.len(), output.len());
        let hist = self.taps.len() - 1;
        self.buffer.truncate(hist);
        self.buffer.extend_from_slice(input);
        output.iter_mut().for_each(|o| *o = 0.0);
        let n = input.len();
        for (k, &h) in self.taps.iter().enumerate() {
            let src = &self.buffer[hist - k..hist - k + n];
            for (o, s) in output.iter_mut().zip(src) {
                *o += h * s;
            }
        }
        self.buffer.drain(..n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_design_meets_probes() {
        let spec = FirSpec::default();
        let fir = spec.design().unwrap();
        assert_eq!(fir.taps.len() % 2, 1);
        assert_eq!(fir.taps.len(), 661);
        let dc = fir_response(&fir, 0.0).unwrap();
        assert!(dc.abs() < 0.05, "{dc}");
        let at_cutoff = fir_response(&fir, spec.cutoff).unwrap();
        assert!((at_cutoff + 6.0).abs() < 1.0, "{at_cutoff}");
        let stop = fir_response(&fir, spec.cutoff + spec.transition_width).unwrap();
        assert!(stop <= -40.0, "{stop}");
        let far = fir_response(&fir, 2e4).unwrap();
        assert!(far <= -40.0, "{far}");
    }

    #[test]
    fn taps_are_symmetric_and_unity_dc() {
        let fir = FirSpec { taps: Some(101), ..FirSpec::default() }.design().unwrap();
        assert_eq!(fir.taps.len(), 101);
        assert_relative_eq!(fir.taps.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        for i in 0..50 {
            assert_relative_eq!(fir.taps[i], fir.taps[100 - i], epsilon = 1e-18);
        }
    }

    #[test]
    fn noise_bandwidth_close_to_cutoff() {
        let fir = FirSpec::default().design().unwrap();
        let b = fir.noise_bandwidth();
        assert!(b > 0.9e4 && b < 1.05e4, "{b}");
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(FirSpec { taps: Some(100), ..FirSpec::default() }.design().is_err());
        assert!(FirSpec { cutoff: 0.0, ..FirSpec::default() }.design().is_err());
        assert!(FirSpec { cutoff: 6e5, ..FirSpec::default() }.design().is_err());
        assert!(fir_response(&FirSpec::default().design().unwrap(), -1.0).is_err());
    }

    #[test]
    fn windows_are_symmetric() {
        for w in [Window::Hamming, Window::Hann, Window::Blackman] {
            let c = w.coefficients(9);
            for i in 0..4 {
                assert_relative_eq!(c[i], c[8 - i], epsilon = 1e-15);
            }
            assert_relative_eq!(c[4], 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn streaming_matches_direct_convolution() {
        let taps = vec![0.1, 0.2, 0.4, 0.2, 0.1];
        let input: Vec<f64> = (0..37).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let mut fir = StreamingFir::new(taps.clone());
        let mut out = Vec::new();
        for chunk in input.chunks(6) {
            let mut o = vec![0.0; chunk.len()];
            fir.process(chunk, &mut o);
            out.extend(o);
        }
        for (n, y) in out.iter().enumerate() {
            let direct: f64 = (0..taps.len())
                .filter(|&k| k <= n)
                .map(|k| taps[k] * input[n - k])
                .sum();
            assert_relative_eq!(*y, direct, epsilon = 1e-12);
        }
        assert_eq!(fir.delay(), 2);
    }

    #[test]
    fn taps_csv_has_header() {
        let fir = FirSpec { taps: Some(3), ..FirSpec::default() }.design().unwrap();
        let mut buf = Vec::new();
        fir.write_taps_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,tap\n0,"));
        assert_eq!(text.lines().count(), 4);
    }
}
