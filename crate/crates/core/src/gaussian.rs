//! Gaussian states of optical modes in the quadrature (covariance-matrix) picture.
//!
//! Conventions used throughout the crate:
//!
//! * Quadratures are ordered per mode, `(x1, y1, x2, y2, ...)`, so each mode owns a
//!   contiguous 2x2 block of the covariance matrix.
//! * The commutator is normalised to `[X, Y] = 2i`. The vacuum therefore has unit
//!   variance in every quadrature and physical states have symplectic eigenvalues
//!   of at least 1.
//! * Phase rotations are right-handed: rotating the mean `(a, b)` by `pi/2` gives
//!   `(-b, a)`.
//!
//! All operations are pure; they consume a reference and return a new state.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative tolerance for covariance symmetry.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Absolute slack allowed below 1 for symplectic eigenvalues.
pub const PHYSICALITY_TOL: f64 = 1e-9;
/// Tolerance on `S Omega S^T = Omega`.
pub const SYMPLECTIC_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("state must have at least one mode")]
    NoModes,
    #[error("mode {mode} out of range for a {n_modes}-mode state")]
    ModeOutOfRange { mode: usize, n_modes: usize },
    #[error("beam splitter needs two distinct modes, got {0} twice")]
    SameMode(usize),
    #[error("squeezing parameter must be non-negative, got {0} (rotate with theta instead)")]
    NegativeSqueezing(f64),
    #[error("transmissivity must lie in [0, 1], got {0}")]
    InvalidTransmissivity(f64),
    #[error("loss efficiency must lie in [0, 1], got {0}")]
    InvalidEfficiency(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("covariance contains non-finite entries")]
    NonFinite,
    #[error("covariance is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("state violates the uncertainty principle: smallest symplectic eigenvalue {0}")]
    Unphysical(f64),
    #[error("matrix is not symplectic (deviation {0:e})")]
    NotSymplectic(f64),
}

pub type Result<T> = std::result::Result<T, GaussianError>;

/// Which quadrature a joint variance refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    X,
    Y,
}

/// Sign of the two-mode combination `(q_i ± q_j) / sqrt(2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combination {
    Sum,
    Difference,
}

/// Standard symplectic form for `n_modes`, block-diagonal in `[[0, 1], [-1, 0]]`.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Convert an output squeezing level in dB to the squeeze parameter `r`,
/// i.e. `exp(-2r) = 10^(-dB/10)`.
pub fn db_to_squeeze_parameter(db: f64) -> f64 {
    (10f64.powf(db / 20.0)).ln()
}

/// Variance relative to vacuum, expressed in dB (`10 log10(V)`).
pub fn variance_to_db(variance: f64) -> f64 {
    10.0 * variance.log10()
}

fn rotation_block(phi: f64) -> [[f64; 2]; 2] {
    let (s, c) = phi.sin_cos();
    [[c, -s], [s, c]]
}

/// A linear phase-space map preserving the commutation relations.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMatrix {
    s: DMatrix<f64>,
}

impl SymplecticMatrix {
    /// Wraps `s` after checking `S Omega S^T = Omega`.
    pub fn new(s: DMatrix<f64>) -> Result<Self> {
        if s.nrows() != s.ncols() || s.nrows() % 2 != 0 || s.nrows() == 0 {
            return Err(GaussianError::Dimension {
                expected: 2 * (s.nrows() / 2).max(1),
                got: s.ncols(),
            });
        }
        let deviation = symplectic_deviation(&s);
        if deviation > SYMPLECTIC_TOL {
            return Err(GaussianError::NotSymplectic(deviation));
        }
        Ok(Self { s })
    }

    pub fn identity(n_modes: usize) -> Self {
        Self {
            s: DMatrix::identity(2 * n_modes, 2 * n_modes),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.s.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    /// Single-mode squeezer `R(theta) diag(e^-r, e^r) R(theta)^T`. At `theta = 0` the
    /// X quadrature is squeezed.
    pub fn squeezer(n_modes: usize, mode: usize, r: f64, theta: f64) -> Result<Self> {
        check_mode(mode, n_modes)?;
        if !(r >= 0.0) {
            return Err(GaussianError::NegativeSqueezing(r));
        }
        let rot = rotation_block(theta);
        let d = [(-r).exp(), r.exp()];
        let mut block = [[0.0; 2]; 2];
        for (i, row) in block.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = (0..2).map(|k| rot[i][k] * d[k] * rot[j][k]).sum();
            }
        }
        Ok(Self {
            s: embed_single(n_modes, mode, block),
        })
    }

    /// Right-handed phase rotation of one mode.
    pub fn rotation(n_modes: usize, mode: usize, phi: f64) -> Result<Self> {
        check_mode(mode, n_modes)?;
        Ok(Self {
            s: embed_single(n_modes, mode, rotation_block(phi)),
        })
    }

    /// Beam splitter with power transmissivity `T` coupling modes `i` and `j`:
    ///
    /// ```text
    /// a_i' = t a_i - e^{-i phase} rho a_j
    /// a_j' = e^{+i phase} rho a_i + t a_j        t = sqrt(T), rho = sqrt(1 - T)
    /// ```
    ///
    /// Its inverse is the same splitter with `phase + pi`, see [`Self::inverse`].
    pub fn beamsplitter(
        n_modes: usize,
        i: usize,
        j: usize,
        transmissivity: f64,
        phase: f64,
    ) -> Result<Self> {
        check_mode(i, n_modes)?;
        check_mode(j, n_modes)?;
        if i == j {
            return Err(GaussianError::SameMode(i));
        }
        if !(0.0..=1.0).contains(&transmissivity) {
            return Err(GaussianError::InvalidTransmissivity(transmissivity));
        }
        let t = transmissivity.sqrt();
        let rho = (1.0 - transmissivity).sqrt();
        let fwd = rotation_block(phase);
        let back = rotation_block(-phase);
        let mut s = DMatrix::identity(2 * n_modes, 2 * n_modes);
        for a in 0..2 {
            for b in 0..2 {
                let diag = if a == b { t } else { 0.0 };
                s[(2 * i + a, 2 * i + b)] = diag;
                s[(2 * j + a, 2 * j + b)] = diag;
                s[(2 * i + a, 2 * j + b)] = -rho * back[a][b];
                s[(2 * j + a, 2 * i + b)] = rho * fwd[a][b];
            }
        }
        Ok(Self { s })
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &SymplecticMatrix) -> Result<Self> {
        if self.s.nrows() != first.s.nrows() {
            return Err(GaussianError::Dimension {
                expected: self.s.nrows(),
                got: first.s.nrows(),
            });
        }
        Ok(Self {
            s: &self.s * &first.s,
        })
    }

    /// Symplectic inverse `Omega S^T Omega^T`.
    pub fn inverse(&self) -> Self {
        let omega = symplectic_form(self.n_modes());
        Self {
            s: &omega * self.s.transpose() * omega.transpose(),
        }
    }

    pub fn apply(&self, state: &QuadratureState) -> Result<QuadratureState> {
        if state.n_modes != self.n_modes() {
            return Err(GaussianError::Dimension {
                expected: 2 * state.n_modes,
                got: self.s.nrows(),
            });
        }
        Ok(QuadratureState {
            n_modes: state.n_modes,
            mean: &self.s * &state.mean,
            cov: &self.s * &state.cov * self.s.transpose(),
        })
    }
}

fn symplectic_deviation(s: &DMatrix<f64>) -> f64 {
    let omega = symplectic_form(s.nrows() / 2);
    (s * &omega * s.transpose() - &omega).amax()
}

fn embed_single(n_modes: usize, mode: usize, block: [[f64; 2]; 2]) -> DMatrix<f64> {
    let mut s = DMatrix::identity(2 * n_modes, 2 * n_modes);
    for a in 0..2 {
        for b in 0..2 {
            s[(2 * mode + a, 2 * mode + b)] = block[a][b];
        }
    }
    s
}

fn check_mode(mode: usize, n_modes: usize) -> Result<()> {
    if mode >= n_modes {
        Err(GaussianError::ModeOutOfRange { mode, n_modes })
    } else {
        Ok(())
    }
}

/// Pure-loss channel `V -> eta V + (1 - eta) I`, `mean -> sqrt(eta) mean`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossChannel {
    eta: f64,
}

impl LossChannel {
    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(GaussianError::InvalidEfficiency(eta));
        }
        Ok(Self { eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// Mean vector and covariance matrix of an N-mode Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureState {
    n_modes: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl QuadratureState {
    /// Builds a state from raw moments, enforcing finiteness, symmetry and physicality.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 {
            return Err(GaussianError::NoModes);
        }
        if dim % 2 != 0 || cov.nrows() != dim || cov.ncols() != dim {
            return Err(GaussianError::Dimension {
                expected: dim + dim % 2,
                got: cov.nrows(),
            });
        }
        let state = Self {
            n_modes: dim / 2,
            mean,
            cov,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn vacuum(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(GaussianError::NoModes);
        }
        Ok(Self {
            n_modes,
            mean: DVector::zeros(2 * n_modes),
            cov: DMatrix::identity(2 * n_modes, 2 * n_modes),
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Checks every state invariant.
    pub fn validate(&self) -> Result<()> {
        if self.mean.iter().chain(self.cov.iter()).any(|v| !v.is_finite()) {
            return Err(GaussianError::NonFinite);
        }
        let scale = self.cov.amax().max(f64::MIN_POSITIVE);
        let asym = (&self.cov - self.cov.transpose()).amax() / scale;
        if asym > SYMMETRY_TOL {
            return Err(GaussianError::NotSymmetric(asym));
        }
        let smallest = self.min_symplectic_eigenvalue();
        if smallest < 1.0 - PHYSICALITY_TOL {
            return Err(GaussianError::Unphysical(smallest));
        }
        Ok(())
    }

    pub fn is_physical(&self) -> bool {
        self.validate().is_ok()
    }

    /// Symplectic eigenvalues in ascending order.
    ///
    /// They are the moduli of the spectrum of `i Omega V`. We obtain their squares
    /// from the symmetric matrix `V^1/2 Omega V Omega^T V^1/2`, which is similar to
    /// `-(Omega V)^2`; every value appears twice.
    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let sqrt_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
        let root = &eig.eigenvectors * sqrt_diag * eig.eigenvectors.transpose();
        let omega = symplectic_form(self.n_modes);
        let m = &root * &omega * &sym * omega.transpose() * &root;
        let m = (&m + m.transpose()) * 0.5;
        let mut squares: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        squares.sort_by(f64::total_cmp);
        squares
            .chunks(2)
            .map(|pair| (0.5 * (pair[0] + pair[1])).max(0.0).sqrt())
            .collect()
    }

    pub fn min_symplectic_eigenvalue(&self) -> f64 {
        self.symplectic_eigenvalues()
            .first()
            .copied()
            .unwrap_or(f64::NAN)
    }

    pub fn squeeze(&self, mode: usize, r: f64, theta: f64) -> Result<Self> {
        SymplecticMatrix::squeezer(self.n_modes, mode, r, theta)?.apply(self)
    }

    pub fn beamsplitter(&self, i: usize, j: usize, transmissivity: f64, phase: f64) -> Result<Self> {
        SymplecticMatrix::beamsplitter(self.n_modes, i, j, transmissivity, phase)?.apply(self)
    }

    pub fn phase_rotate(&self, mode: usize, phi: f64) -> Result<Self> {
        SymplecticMatrix::rotation(self.n_modes, mode, phi)?.apply(self)
    }

    pub fn displace(&self, mode: usize, dx: f64, dy: f64) -> Result<Self> {
        check_mode(mode, self.n_modes)?;
        let mut out = self.clone();
        out.mean[2 * mode] += dx;
        out.mean[2 * mode + 1] += dy;
        Ok(out)
    }

    pub fn loss(&self, mode: usize, channel: LossChannel) -> Result<Self> {
        check_mode(mode, self.n_modes)?;
        let dim = 2 * self.n_modes;
        let root = channel.eta.sqrt();
        let mut scale = DVector::from_element(dim, 1.0);
        scale[2 * mode] = root;
        scale[2 * mode + 1] = root;
        let mut cov = self.cov.clone();
        for r in 0..dim {
            for c in 0..dim {
                cov[(r, c)] *= scale[r] * scale[c];
            }
        }
        cov[(2 * mode, 2 * mode)] += 1.0 - channel.eta;
        cov[(2 * mode + 1, 2 * mode + 1)] += 1.0 - channel.eta;
        Ok(Self {
            n_modes: self.n_modes,
            mean: self.mean.component_mul(&scale),
            cov,
        })
    }

    /// First and second moments of `X cos(theta) + Y sin(theta)` on one mode.
    pub fn homodyne_moments(&self, mode: usize, theta: f64) -> Result<(f64, f64)> {
        check_mode(mode, self.n_modes)?;
        let (s, c) = theta.sin_cos();
        let (ix, iy) = (2 * mode, 2 * mode + 1);
        let mean = c * self.mean[ix] + s * self.mean[iy];
        let var = c * c * self.cov[(ix, ix)]
            + 2.0 * c * s * self.cov[(ix, iy)]
            + s * s * self.cov[(iy, iy)];
        Ok((mean, var))
    }

    /// Covariance between the homodyne outcomes of two different modes.
    pub fn homodyne_covariance(&self, mode_i: usize, theta_i: f64, mode_j: usize, theta_j: f64) -> Result<f64> {
        check_mode(mode_i, self.n_modes)?;
        check_mode(mode_j, self.n_modes)?;
        let (si, ci) = theta_i.sin_cos();
        let (sj, cj) = theta_j.sin_cos();
        let wi = [ci, si];
        let wj = [cj, sj];
        let mut acc = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                acc += wi[a] * wj[b] * self.cov[(2 * mode_i + a, 2 * mode_j + b)];
            }
        }
        Ok(acc)
    }

    /// `Var((q_i ± q_j) / sqrt(2))` for `q` the chosen quadrature.
    pub fn joint_quadrature_variance(
        &self,
        mode_i: usize,
        mode_j: usize,
        quadrature: Quadrature,
        combination: Combination,
    ) -> Result<f64> {
        check_mode(mode_i, self.n_modes)?;
        check_mode(mode_j, self.n_modes)?;
        if mode_i == mode_j {
            return Err(GaussianError::SameMode(mode_i));
        }
        let offset = match quadrature {
            Quadrature::X => 0,
            Quadrature::Y => 1,
        };
        let sign = match combination {
            Combination::Sum => 1.0,
            Combination::Difference => -1.0,
        };
        let (a, b) = (2 * mode_i + offset, 2 * mode_j + offset);
        Ok(0.5 * (self.cov[(a, a)] + self.cov[(b, b)] + 2.0 * sign * self.cov[(a, b)]))
    }
}
