//! Statistics over measurement records: windowed variances, inferred-observable
//! uncertainties, bound classification and trajectory residuals.

use std::io::Write;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

use crate::bench::{BenchError, ReadoutModel};
pub use crate::gaussian::variance_to_db;
use crate::synth::SampleRecord;
use crate::trajectory::TrajectorySpec;

/// Short window used for the scatter of single-window variances.
pub const SHORT_WINDOW: usize = 260;
/// Default analysis window.
pub const LONG_WINDOW: usize = 2600;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("{got} records supplied, need at least {need}")]
    InsufficientRecords { got: usize, need: usize },
    #[error("window must be at least 2 records")]
    InvalidWindow,
    #[error("records have zero variance")]
    ZeroVariance,
    #[error("record {index} at t = {t} lies outside the trajectory span [0, {duration}]")]
    TimelineMismatch { index: usize, t: f64, duration: f64 },
    #[error(transparent)]
    Bench(#[from] BenchError),
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// How records are centred before squaring.
#[derive(Debug, Clone, Copy)]
pub enum Centering<'a> {
    /// Subtract each window's sample mean; divisor `n - 1`.
    SampleMean,
    /// Subtract the readout of the true trajectory; divisor `n`.
    KnownMean(&'a TrajectorySpec, &'a ReadoutModel),
}

impl Centering<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Centering::SampleMean => "sample_mean",
            Centering::KnownMean(..) => "known_mean",
        }
    }

    /// Degrees of freedom of a variance over `n` records.
    pub fn dof(&self, n: usize) -> usize {
        match self {
            Centering::SampleMean => n - 1,
            Centering::KnownMean(..) => n,
        }
    }

    fn expected(&self, r: &SampleRecord) -> Vector2<f64> {
        match self {
            Centering::SampleMean => Vector2::zeros(),
            Centering::KnownMean(spec, model) => {
                let (x, y) = spec.sample_clamped(r.t);
                model.readout_mean(x, y)
            }
        }
    }
}

/// Variance of `values` about `means` (known-mean) or about their own mean.
fn variance(values: &[f64], known_mean: bool) -> f64 {
    let n = values.len() as f64;
    if known_mean {
        sum(values.iter().map(|v| v * v)) / n
    } else {
        let m = sum(values.iter().copied()) / n;
        sum(values.iter().map(|v| (v - m) * (v - m))) / (n - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowVariance {
    pub index: usize,
    pub t_start: f64,
    pub var_u: f64,
    pub var_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedVariance {
    pub window: usize,
    pub windows: Vec<WindowVariance>,
    /// Mean of the per-window variances.
    pub pooled_u: f64,
    pub pooled_v: f64,
}

/// Centred `(u, v)` residuals of each record.
fn centred(records: &[SampleRecord], centering: Centering) -> (Vec<f64>, Vec<f64>) {
    records
        .iter()
        .map(|r| {
            let m = centering.expected(r);
            (r.u - m[0], r.v - m[1])
        })
        .unzip()
}

/// Variances over consecutive non-overlapping windows of `window` records.
/// Trailing records that do not fill a window are ignored.
pub fn windowed_variance(
    records: &[SampleRecord],
    window: usize,
    centering: Centering,
) -> Result<WindowedVariance, AnalysisError> {
    if window < 2 {
        return Err(AnalysisError::InvalidWindow);
    }
    if records.len() < window {
        return Err(AnalysisError::InsufficientRecords {
            got: records.len(),
            need: window,
        });
    }
    let known = matches!(centering, Centering::KnownMean(..));
    let (u, v) = centred(records, centering);
    let windows: Vec<WindowVariance> = (0..records.len() / window)
        .map(|i| {
            let span = i * window..(i + 1) * window;
            WindowVariance {
                index: i,
                t_start: records[span.start].t,
                var_u: variance(&u[span.clone()], known),
                var_v: variance(&v[span], known),
            }
        })
        .collect();
    let k = windows.len() as f64;
    Ok(WindowedVariance {
        window,
        pooled_u: sum(windows.iter().map(|w| w.var_u)) / k,
        pooled_v: sum(windows.iter().map(|w| w.var_v)) / k,
        windows,
    })
}

/// Two-sided chi-square interval for an estimated variance at `sigmas` normal
/// equivalents: the range of true variances consistent with `estimate`.
pub fn variance_interval(estimate: f64, dof: f64, sigmas: f64) -> (f64, f64) {
    let (lo_q, hi_q) = chi_square_quantiles(dof, sigmas);
    (dof * estimate / hi_q, dof * estimate / lo_q)
}

/// Range within which an estimate of a true variance `truth` falls with
/// probability matching `sigmas` normal equivalents.
pub fn estimate_band(truth: f64, dof: f64, sigmas: f64) -> (f64, f64) {
    let (lo_q, hi_q) = chi_square_quantiles(dof, sigmas);
    (truth * lo_q / dof, truth * hi_q / dof)
}

fn chi_square_quantiles(dof: f64, sigmas: f64) -> (f64, f64) {
    let tail = Normal::standard().cdf(-sigmas);
    let chi = ChiSquared::new(dof).expect("positive degrees of freedom");
    (chi.inverse_cdf(tail), chi.inverse_cdf(1.0 - tail))
}

/// Autocorrelation of `x` about its mean at lags `1..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let m = sum(x.iter().copied()) / n as f64;
    let c0 = sum(x.iter().map(|v| (v - m) * (v - m)));
    (1..=max_lag.min(n.saturating_sub(1)))
        .map(|lag| sum((0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m))) / c0)
        .collect()
}

/// Number of independent records carrying the same information about a
/// variance (`power = 2`) or a fourth moment (`power = 4`). Lags are summed until
/// two consecutive autocorrelations fall inside the noise floor `2 / sqrt(n)`.
pub fn effective_sample_size(x: &[f64], power: i32) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let floor = 2.0 / (n as f64).sqrt();
    let rho = autocorrelation(x, 200.min(n / 4));
    let mut total = 0.0;
    let mut quiet = 0;
    for r in rho {
        if r.abs() < floor {
            quiet += 1;
            if quiet == 2 {
                break;
            }
            continue;
        }
        quiet = 0;
        total += r.powi(power);
    }
    n as f64 / (1.0 + 2.0 * total)
}

/// Sample excess kurtosis.
pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = sum(x.iter().copied()) / n;
    let m2 = sum(x.iter().map(|v| (v - m).powi(2))) / n;
    let m4 = sum(x.iter().map(|v| (v - m).powi(4))) / n;
    m4 / (m2 * m2) - 3.0
}

/// Inferred `(X, Y)` for each record: the records mapped back through the gain.
pub fn infer(records: &[SampleRecord], model: &ReadoutModel) -> Result<Vec<(f64, f64)>, AnalysisError> {
    let inv = model.inverse_gain()?;
    Ok(records
        .iter()
        .map(|r| {
            let p = inv * Vector2::new(r.u, r.v);
            (p[0], p[1])
        })
        .collect())
}

/// Product of inferred standard deviations and the factor by which it beats
/// the semiclassical floor of 2.
pub fn uncertainty_product(var_x_inferred: f64, var_y_inferred: f64) -> Result<(f64, f64), AnalysisError> {
    if !(var_x_inferred > 0.0 && var_y_inferred > 0.0) {
        return Err(AnalysisError::ZeroVariance);
    }
    let product = (var_x_inferred * var_y_inferred).sqrt();
    Ok((product, 2.0 / product))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundClass {
    /// Product statistically below the semiclassical floor of 2.
    ViolatesEq2,
    Semiclassical,
    /// Product statistically below what the configured bench can produce.
    UnphysicalFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingSummary {
    pub rms_x: f64,
    pub rms_y: f64,
    pub excess_kurtosis_x: f64,
    pub excess_kurtosis_y: f64,
    /// Three-sigma half-width of the kurtosis band for Gaussian residuals.
    pub kurtosis_band: f64,
    pub gaussian: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryError {
    pub rms_x: f64,
    pub rms_y: f64,
    /// `(t, dx, dy)` per record.
    pub residuals: Vec<(f64, f64, f64)>,
}

/// Inferred records minus the true trajectory.
pub fn trajectory_error(
    records: &[SampleRecord],
    spec: &TrajectorySpec,
    model: &ReadoutModel,
) -> Result<TrajectoryError, AnalysisError> {
    let inferred = infer(records, model)?;
    let mut residuals = Vec::with_capacity(records.len());
    for (i, (r, (x, y))) in records.iter().zip(inferred).enumerate() {
        let (tx, ty) = spec.sample(r.t).map_err(|_| AnalysisError::TimelineMismatch {
            index: i,
            t: r.t,
            duration: spec.duration,
        })?;
        residuals.push((r.t, x - tx, y - ty));
    }
    if residuals.is_empty() {
        return Err(AnalysisError::InsufficientRecords { got: 0, need: 1 });
    }
    let n = residuals.len() as f64;
    let rms_x = (sum(residuals.iter().map(|r| r.1 * r.1)) / n).sqrt();
    let rms_y = (sum(residuals.iter().map(|r| r.2 * r.2)) / n).sqrt();
    Ok(TrajectoryError { rms_x, rms_y, residuals })
}

/// Kurtosis sanity check of tracking residuals.
pub fn tracking_summary(error: &TrajectoryError) -> TrackingSummary {
    let dx: Vec<f64> = error.residuals.iter().map(|r| r.1).collect();
    let dy: Vec<f64> = error.residuals.iter().map(|r| r.2).collect();
    let (kx, ky) = (excess_kurtosis(&dx), excess_kurtosis(&dy));
    let n_eff = effective_sample_size(&dx, 4).min(effective_sample_size(&dy, 4));
    let band = 3.0 * (24.0 / n_eff).sqrt();
    TrackingSummary {
        rms_x: error.rms_x,
        rms_y: error.rms_y,
        excess_kurtosis_x: kx,
        excess_kurtosis_y: ky,
        kurtosis_band: band,
        gaussian: kx.abs() <= band && ky.abs() <= band,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub var_u: f64,
    pub var_v: f64,
    pub var_x_inferred: f64,
    pub var_y_inferred: f64,
    pub product_inferred: f64,
}

impl Prediction {
    pub fn from_model(model: &ReadoutModel) -> Result<Self, AnalysisError> {
        let c = model.inferred_cov()?;
        Ok(Self {
            var_u: model.noise_cov[(0, 0)],
            var_v: model.noise_cov[(1, 1)],
            var_x_inferred: c[(0, 0)],
            var_y_inferred: c[(1, 1)],
            product_inferred: (c[(0, 0)] * c[(1, 1)]).sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_records: usize,
    pub centering: String,
    pub var_u: f64,
    pub var_v: f64,
    pub var_x_inferred: f64,
    pub var_y_inferred: f64,
    pub product_inferred: f64,
    pub violation_factor_eq2: f64,
    pub squeezing_db: (f64, f64),
    /// Records carrying independent variance information (autocorrelation corrected).
    pub effective_records: f64,
    /// Three-sigma chi-square intervals for the true `var_u` and `var_v`.
    pub interval_u: (f64, f64),
    pub interval_v: (f64, f64),
    pub predicted: Prediction,
    pub classification: BoundClass,
    pub window_size: usize,
    pub pooled_u: f64,
    pub pooled_v: f64,
    pub per_window_variances: Vec<WindowVariance>,
    pub short_window_size: usize,
    pub short_windows: Vec<WindowVariance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracking: Option<TrackingSummary>,
}

/// Full analysis of one run. With `spec`, variances are taken about the known
/// trajectory; otherwise about the sample mean.
pub fn summarize(
    records: &[SampleRecord],
    model: &ReadoutModel,
    spec: Option<&TrajectorySpec>,
    window: usize,
) -> Result<RunSummary, AnalysisError> {
    let centering = match spec {
        Some(s) => Centering::KnownMean(s, model),
        None => Centering::SampleMean,
    };
    let known = spec.is_some();
    let n = records.len();
    if n < window.max(2) {
        return Err(AnalysisError::InsufficientRecords {
            got: n,
            need: window.max(2),
        });
    }
    let (u, v) = centred(records, centering);
    let (var_u, var_v) = (variance(&u, known), variance(&v, known));
    if !(var_u > 0.0 && var_v > 0.0) {
        return Err(AnalysisError::ZeroVariance);
    }
    let inv = model.inverse_gain()?;
    let (x, y): (Vec<f64>, Vec<f64>) = u
        .iter()
        .zip(&v)
        .map(|(a, b)| {
            let p = inv * Vector2::new(*a, *b);
            (p[0], p[1])
        })
        .unzip();
    let (var_x, var_y) = (variance(&x, known), variance(&y, known));
    let (product, factor) = uncertainty_product(var_x, var_y)?;

    let n_eff = effective_sample_size(&u, 2).min(effective_sample_size(&v, 2));
    let dof = (n_eff - if known { 0.0 } else { 1.0 }).max(1.0);
    let long = windowed_variance(records, window, centering)?;
    let short = if n >= SHORT_WINDOW {
        windowed_variance(records, SHORT_WINDOW, centering)?.windows
    } else {
        Vec::new()
    };
    let tracking = match spec {
        Some(s) if !s.is_zero() => Some(tracking_summary(&trajectory_error(records, s, model)?)),
        _ => None,
    };

    let mut summary = RunSummary {
        n_records: n,
        centering: centering.name().to_string(),
        var_u,
        var_v,
        var_x_inferred: var_x,
        var_y_inferred: var_y,
        product_inferred: product,
        violation_factor_eq2: factor,
        squeezing_db: (variance_to_db(var_u), variance_to_db(var_v)),
        effective_records: n_eff,
        interval_u: variance_interval(var_u, dof, 3.0),
        interval_v: variance_interval(var_v, dof, 3.0),
        predicted: Prediction::from_model(model)?,
        classification: BoundClass::Semiclassical,
        window_size: window,
        pooled_u: long.pooled_u,
        pooled_v: long.pooled_v,
        per_window_variances: long.windows,
        short_window_size: SHORT_WINDOW,
        short_windows: short,
        tracking,
    };
    summary.classification = bound_check(&summary);
    Ok(summary)
}

/// Classifies the measured product. The log of a product of two variance
/// estimates has standard error close to `1 / sqrt(n_eff)`.
pub fn bound_check(summary: &RunSummary) -> BoundClass {
    let sigma = 1.0 / (summary.effective_records - 1.0).max(1.0).sqrt();
    let log_p = summary.product_inferred.ln();
    if log_p < summary.predicted.product_inferred.ln() - 5.0 * sigma {
        BoundClass::UnphysicalFlag
    } else if log_p < 2f64.ln() - 3.0 * sigma {
        BoundClass::ViolatesEq2
    } else {
        BoundClass::Semiclassical
    }
}

/// Writes `t,u,v,x_inferred,y_inferred` with 17 significant digits.
pub fn write_records_csv<W: Write>(
    mut out: W,
    records: &[SampleRecord],
    gain: &Matrix2<f64>,
) -> Result<(), std::io::Error> {
    let inv = gain.try_inverse().unwrap_or_else(Matrix2::zeros);
    writeln!(out, "t,u,v,x_inferred,y_inferred")?;
    for r in records {
        let p = inv * Vector2::new(r.u, r.v);
        writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", r.t, r.u, r.v, p[0], p[1])?;
    }
    Ok(())
}

pub fn write_windows_csv<W: Write>(mut out: W, windows: &[WindowVariance]) -> std::io::Result<()> {
    writeln!(out, "window,t_start,var_u,var_v")?;
    for w in windows {
        writeln!(out, "{},{:.16e},{:.16e},{:.16e}", w.index, w.t_start, w.var_u, w.var_v)?;
    }
    Ok(())
}

pub fn write_residuals_csv<W: Write>(mut out: W, error: &TrajectoryError) -> std::io::Result<()> {
    writeln!(out, "t,dx,dy")?;
    for (t, dx, dy) in &error.residuals {
        writeln!(out, "{t:.16e},{dx:.16e},{dy:.16e}")?;
    }
    Ok(())
}
