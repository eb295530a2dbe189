//! The optical bench: two squeezers, an entangling splitter, the displacement port
//! and the recombining splitter feeding two balanced homodyne detectors.
//!
//! Mode 0 is the interrogated arm (the one that gets displaced), mode 1 the
//! entangled reference. After the recombining splitter, output 0 goes to BHD1 and
//! carries `(X - X0)/sqrt(2)`, output 1 goes to BHD2 and carries `(Y + Y0)/sqrt(2)`.
//!
//! [`build_bench`] runs the whole chain through [`crate::gaussian`] and condenses
//! it into a [`ReadoutModel`]: a linear gain from the displacement to the two
//! detector means, plus the 2x2 covariance of the detector noise.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{db_to_squeeze_parameter, GaussianError, LossChannel, QuadratureState};

const SIGNAL: usize = 0;
const REFERENCE: usize = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("{field} must be {expected}, got {value}")]
    OutOfRange {
        field: &'static str,
        expected: &'static str,
        value: f64,
    },
    #[error("readout gain is singular (determinant {0:e})")]
    SingularGain(f64),
    #[error("noise covariance is not positive definite")]
    NoiseNotPositive,
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

fn default_bs2_reflectivity() -> f64 {
    0.9999
}

fn default_lo_phase_2() -> f64 {
    FRAC_PI_2
}

fn default_detector_efficiency() -> f64 {
    0.99
}

/// Declarative description of the bench. Efficiencies are power transmissions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub squeezer1_db: f64,
    pub squeezer2_db: f64,
    pub bs1_visibility: f64,
    pub bs3_visibility: f64,
    pub arm_loss_a: f64,
    pub arm_loss_b: f64,
    #[serde(default = "default_detector_efficiency")]
    pub detector_efficiency: f64,
    #[serde(default = "default_bs2_reflectivity")]
    pub bs2_reflectivity: f64,
    #[serde(default)]
    pub lo_phase_1: f64,
    #[serde(default = "default_lo_phase_2")]
    pub lo_phase_2: f64,
    pub entanglement_on: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            squeezer1_db: 10.0,
            squeezer2_db: 10.0,
            bs1_visibility: 1.0,
            bs3_visibility: 1.0,
            arm_loss_a: 1.0,
            arm_loss_b: 1.0,
            detector_efficiency: default_detector_efficiency(),
            bs2_reflectivity: default_bs2_reflectivity(),
            lo_phase_1: 0.0,
            lo_phase_2: FRAC_PI_2,
            entanglement_on: true,
        }
    }
}

impl BenchConfig {
    /// Lossless bench with perfect contrast and both squeezers at `db`.
    pub fn ideal(db: f64) -> Self {
        Self {
            squeezer1_db: db,
            squeezer2_db: db,
            detector_efficiency: 1.0,
            bs2_reflectivity: 1.0,
            ..Self::default()
        }
    }

    /// The same bench with the entanglement source switched off.
    pub fn without_entanglement(&self) -> Self {
        Self {
            entanglement_on: false,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let non_negative = |field, value: f64| {
            if value >= 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(BenchError::OutOfRange { field, expected: "a finite value >= 0", value })
            }
        };
        let unit = |field, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(BenchError::OutOfRange { field, expected: "in [0, 1]", value })
            }
        };
        let open_unit = |field, value: f64| {
            if value > 0.0 && value <= 1.0 {
                Ok(())
            } else {
                Err(BenchError::OutOfRange { field, expected: "in (0, 1]", value })
            }
        };
        let finite = |field, value: f64| {
            if value.is_finite() {
                Ok(())
            } else {
                Err(BenchError::OutOfRange { field, expected: "finite", value })
            }
        };
        non_negative("squeezer1_db", self.squeezer1_db)?;
        non_negative("squeezer2_db", self.squeezer2_db)?;
        open_unit("bs1_visibility", self.bs1_visibility)?;
        open_unit("bs3_visibility", self.bs3_visibility)?;
        unit("arm_loss_a", self.arm_loss_a)?;
        unit("arm_loss_b", self.arm_loss_b)?;
        unit("detector_efficiency", self.detector_efficiency)?;
        open_unit("bs2_reflectivity", self.bs2_reflectivity)?;
        finite("lo_phase_1", self.lo_phase_1)?;
        finite("lo_phase_2", self.lo_phase_2)?;
        Ok(())
    }
}

/// Mode-overlap efficiency for an interference contrast `v`, used as a loss on
/// each beam meeting at the splitter.
pub fn visibility_to_efficiency(v: f64) -> Result<f64, BenchError> {
    if v > 0.0 && v <= 1.0 {
        Ok(v * v)
    } else {
        Err(BenchError::OutOfRange {
            field: "visibility",
            expected: "in (0, 1]",
            value: v,
        })
    }
}

/// Linear readout: `E[(u, v)] = gain * (<X>, <Y>)`, `Cov(u, v) = noise_cov`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub gain: Matrix2<f64>,
    pub noise_cov: Matrix2<f64>,
}

impl ReadoutModel {
    /// Detector means for a displacement `(x, y)`.
    pub fn readout_mean(&self, x: f64, y: f64) -> Vector2<f64> {
        self.gain * Vector2::new(x, y)
    }

    /// Inverse gain mapping detector readings back to displacement estimates.
    pub fn inverse_gain(&self) -> Result<Matrix2<f64>, BenchError> {
        let det = self.gain.determinant();
        if det.abs() < 1e-12 || !det.is_finite() {
            return Err(BenchError::SingularGain(det));
        }
        Ok(self.gain.try_inverse().ok_or(BenchError::SingularGain(det))?)
    }

    /// Covariance of the inferred `(X, Y)` estimates, `G^-1 N G^-T`.
    pub fn inferred_cov(&self) -> Result<Matrix2<f64>, BenchError> {
        let inv = self.inverse_gain()?;
        Ok(inv * self.noise_cov * inv.transpose())
    }

    /// Lower Cholesky factor of the noise covariance.
    pub fn noise_factor(&self) -> Result<Matrix2<f64>, BenchError> {
        let sym = (self.noise_cov + self.noise_cov.transpose()) * 0.5;
        sym.cholesky().map(|c| c.l()).ok_or(BenchError::NoiseNotPositive)
    }
}

/// Runs the full bench chain and extracts the readout model.
pub fn build_bench(config: &BenchConfig) -> Result<ReadoutModel, BenchError> {
    config.validate()?;
    let dark = output_state(config, 0.0, 0.0)?;
    dark.validate()?;
    let (lo1, lo2) = (config.lo_phase_1, config.lo_phase_2);

    let (_, var1) = dark.homodyne_moments(SIGNAL, lo1)?;
    let (_, var2) = dark.homodyne_moments(REFERENCE, lo2)?;
    let cross = dark.homodyne_covariance(SIGNAL, lo1, REFERENCE, lo2)?;
    let noise_cov = Matrix2::new(var1, cross, cross, var2);

    // The chain is affine in the injected displacement; probe it column by column.
    let mut gain = Matrix2::zeros();
    for (col, (dx, dy)) in [(1.0, 0.0), (0.0, 1.0)].into_iter().enumerate() {
        let lit = output_state(config, dx, dy)?;
        gain[(0, col)] = lit.homodyne_moments(SIGNAL, lo1)?.0;
        gain[(1, col)] = lit.homodyne_moments(REFERENCE, lo2)?.0;
    }

    let model = ReadoutModel { gain, noise_cov };
    if noise_cov.symmetric_eigenvalues().min() <= 0.0 {
        return Err(BenchError::NoiseNotPositive);
    }
    Ok(model)
}

/// Two-mode state arriving at the detectors for a displacement `(dx, dy)`.
fn output_state(config: &BenchConfig, dx: f64, dy: f64) -> Result<QuadratureState, BenchError> {
    let loss = |eta: f64| LossChannel::new(eta);
    let mut state = QuadratureState::vacuum(2)?;
    if config.entanglement_on {
        state = state
            .squeeze(SIGNAL, db_to_squeeze_parameter(config.squeezer1_db), FRAC_PI_2)?
            .squeeze(REFERENCE, db_to_squeeze_parameter(config.squeezer2_db), 0.0)?;
    }

    let bs1 = loss(visibility_to_efficiency(config.bs1_visibility)?)?;
    state = state
        .loss(SIGNAL, bs1)?
        .loss(REFERENCE, bs1)?
        .beamsplitter(SIGNAL, REFERENCE, 0.5, 0.0)?
        .loss(SIGNAL, loss(config.arm_loss_a)?)?
        .loss(REFERENCE, loss(config.arm_loss_b)?)?;

    // BS2 reflects the entangled arm; only its (1 - R) transmission is lost.
    state = state
        .loss(SIGNAL, loss(config.bs2_reflectivity)?)?
        .displace(SIGNAL, dx, dy)?;

    let bs3 = loss(visibility_to_efficiency(config.bs3_visibility)?)?;
    let det = loss(config.detector_efficiency)?;
    Ok(state
        .loss(SIGNAL, bs3)?
        .loss(REFERENCE, bs3)?
        .beamsplitter(SIGNAL, REFERENCE, 0.5, 0.0)?
        .loss(SIGNAL, det)?
        .loss(REFERENCE, det)?)
}

/// Product of the standard deviations of the inferred `X` and `Y` estimates.
pub fn predicted_uncertainty_product(model: &ReadoutModel) -> Result<f64, BenchError> {
    let c = model.inferred_cov()?;
    Ok((c[(0, 0)] * c[(1, 1)]).sqrt())
}
