use serde::{Deserialize, Serialize};

use super::DspError;
use crate::synth::SampleRecord;

/// Fewest vacuum records accepted for a calibration.
pub const MIN_CALIBRATION_RECORDS: usize = 2600;

/// Per-channel multiplicative scale on the variance: calibrated records are the
/// raw ones times `sqrt(scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationScale {
    pub scale_u: f64,
    pub scale_v: f64,
}

impl CalibrationScale {
    pub const UNITY: Self = Self {
        scale_u: 1.0,
        scale_v: 1.0,
    };

    pub fn apply(&self, records: &[SampleRecord]) -> Vec<SampleRecord> {
        let (su, sv) = (self.scale_u.sqrt(), self.scale_v.sqrt());
        records
            .iter()
            .map(|r| SampleRecord {
                t: r.t,
                u: r.u * su,
                v: r.v * sv,
            })
            .collect()
    }
}

fn sample_variance(x: impl Iterator<Item = f64> + Clone, n: usize) -> f64 {
    let mean = x.clone().sum::<f64>() / n as f64;
    x.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
}

/// Scale that brings vacuum records to unit variance in each channel.
pub fn calibrate(vacuum: &[SampleRecord]) -> Result<CalibrationScale, DspError> {
    let n = vacuum.len();
    if n < MIN_CALIBRATION_RECORDS {
        return Err(DspError::TooFewRecords {
            got: n,
            need: MIN_CALIBRATION_RECORDS,
        });
    }
    let vu = sample_variance(vacuum.iter().map(|r| r.u), n);
    let vv = sample_variance(vacuum.iter().map(|r| r.v), n);
    if !(vu > 0.0 && vv > 0.0) {
        return Err(DspError::ZeroVariance);
    }
    Ok(CalibrationScale {
        scale_u: 1.0 / vu,
        scale_v: 1.0 / vv,
    })
}
