//! Time-dependent displacements `alpha(t) = <X>(t) + i <Y>(t)` driving the bench.
//!
//! Amplitudes are in vacuum-normalised quadrature units, phases in radians and
//! phase rates in rad/s.

use std::f64::consts::{SQRT_2, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("duration must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error("radius must be non-negative and finite, got {0}")]
    InvalidRadius(f64),
    #[error("trajectory parameter `{0}` must be finite")]
    NonFinite(&'static str),
    #[error("turn fraction must lie strictly between 0 and 1, got {0}")]
    InvalidTurnFraction(f64),
    #[error("need at least two waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoint times must be strictly increasing (index {0})")]
    WaypointOrder(usize),
    #[error("time {t} outside trajectory span [0, {duration}]")]
    OutOfRange { t: f64, duration: f64 },
}

/// Phase of a circular or spiral trajectory, relative to its starting phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseProfile {
    /// Constant phase rate in rad/s.
    Linear { rate: f64 },
    /// Smooth sweep out to `peak` radians, then back to `end` radians, turning at
    /// `turn_fraction` of the duration. Each leg is eased (zero phase velocity at
    /// the start, the turnaround and the end).
    SweepReverse {
        peak: f64,
        end: f64,
        turn_fraction: f64,
    },
}

impl PhaseProfile {
    fn offset(&self, t: f64, duration: f64) -> f64 {
        match *self {
            PhaseProfile::Linear { rate } => rate * t,
            PhaseProfile::SweepReverse { peak, end, turn_fraction } => {
                let turn = turn_fraction * duration;
                if t <= turn {
                    peak * smoothstep(t / turn)
                } else {
                    peak + (end - peak) * smoothstep((t - turn) / (duration - turn))
                }
            }
        }
    }

    fn validate(&self) -> Result<(), TrajectoryError> {
        match *self {
            PhaseProfile::Linear { rate } => finite("rate", rate),
            PhaseProfile::SweepReverse { peak, end, turn_fraction } => {
                finite("peak", peak)?;
                finite("end", end)?;
                if turn_fraction > 0.0 && turn_fraction < 1.0 {
                    Ok(())
                } else {
                    Err(TrajectoryError::InvalidTurnFraction(turn_fraction))
                }
            }
        }
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Linear,
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryKind {
    Zero,
    Constant {
        x: f64,
        y: f64,
    },
    /// Constant modulation depth, changing modulation type.
    Arc {
        radius: f64,
        phase_start: f64,
        phase: PhaseProfile,
    },
    /// Radius ramps linearly from `radius_start` to `radius_end`.
    Spiral {
        radius_start: f64,
        radius_end: f64,
        phase_start: f64,
        phase: PhaseProfile,
    },
    /// Held at the first/last waypoint outside the waypoint span.
    Waypoints {
        points: Vec<Waypoint>,
        interpolation: Interpolation,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub duration: f64,
    #[serde(flatten)]
    pub kind: TrajectoryKind,
}

impl TrajectorySpec {
    pub fn new(kind: TrajectoryKind, duration: f64) -> Result<Self, TrajectoryError> {
        let spec = Self { duration, kind };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zero(duration: f64) -> Result<Self, TrajectoryError> {
        Self::new(TrajectoryKind::Zero, duration)
    }

    pub fn constant(x: f64, y: f64, duration: f64) -> Result<Self, TrajectoryError> {
        Self::new(TrajectoryKind::Constant { x, y }, duration)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, TrajectoryKind::Zero)
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(TrajectoryError::InvalidDuration(self.duration));
        }
        match &self.kind {
            TrajectoryKind::Zero => Ok(()),
            TrajectoryKind::Constant { x, y } => {
                finite("x", *x)?;
                finite("y", *y)
            }
            TrajectoryKind::Arc { radius, phase_start, phase } => {
                radius_ok(*radius)?;
                finite("phase_start", *phase_start)?;
                phase.validate()
            }
            TrajectoryKind::Spiral {
                radius_start,
                radius_end,
                phase_start,
                phase,
            } => {
                radius_ok(*radius_start)?;
                radius_ok(*radius_end)?;
                finite("phase_start", *phase_start)?;
                phase.validate()
            }
            TrajectoryKind::Waypoints { points, .. } => {
                if points.len() < 2 {
                    return Err(TrajectoryError::TooFewWaypoints(points.len()));
                }
                for p in points {
                    finite("t", p.t)?;
                    finite("x", p.x)?;
                    finite("y", p.y)?;
                }
                match points.windows(2).position(|w| w[1].t <= w[0].t) {
                    Some(i) => Err(TrajectoryError::WaypointOrder(i + 1)),
                    None => Ok(()),
                }
            }
        }
    }

    /// Displacement `(<X>, <Y>)` at `t`, for `0 <= t <= duration`.
    pub fn sample(&self, t: f64) -> Result<(f64, f64), TrajectoryError> {
        if !(t >= 0.0 && t <= self.duration) {
            return Err(TrajectoryError::OutOfRange { t, duration: self.duration });
        }
        Ok(self.eval(t))
    }

    /// Like [`Self::sample`] but holds the end values outside the span. Used where
    /// filters need settled input before and after the measured interval.
    pub fn sample_clamped(&self, t: f64) -> (f64, f64) {
        self.eval(t.clamp(0.0, self.duration))
    }

    /// Modulation depth `|alpha(t)|`.
    pub fn depth(&self, t: f64) -> Result<f64, TrajectoryError> {
        let (x, y) = self.sample(t)?;
        Ok(x.hypot(y))
    }

    fn eval(&self, t: f64) -> (f64, f64) {
        match &self.kind {
            TrajectoryKind::Zero => (0.0, 0.0),
            TrajectoryKind::Constant { x, y } => (*x, *y),
            TrajectoryKind::Arc { radius, phase_start, phase } => {
                polar(*radius, phase_start + phase.offset(t, self.duration))
            }
            TrajectoryKind::Spiral {
                radius_start,
                radius_end,
                phase_start,
                phase,
            } => {
                let frac = t / self.duration;
                let radius = radius_start + (radius_end - radius_start) * frac;
                polar(radius, phase_start + phase.offset(t, self.duration))
            }
            TrajectoryKind::Waypoints { points, interpolation } => match interpolation {
                Interpolation::Linear => linear_waypoints(points, t),
                Interpolation::Cubic => cubic_waypoints(points, t),
            },
        }
    }
}

/// Convenience wrapper mirroring [`TrajectorySpec::sample`].
pub fn sample_trajectory(spec: &TrajectorySpec, t: f64) -> Result<(f64, f64), TrajectoryError> {
    spec.sample(t)
}

fn polar(radius: f64, phase: f64) -> (f64, f64) {
    let (s, c) = phase.sin_cos();
    (radius * c, radius * s)
}

fn finite(name: &'static str, v: f64) -> Result<(), TrajectoryError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(TrajectoryError::NonFinite(name))
    }
}

fn radius_ok(r: f64) -> Result<(), TrajectoryError> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(TrajectoryError::InvalidRadius(r))
    }
}

/// Index `i` with `points[i].t <= t < points[i+1].t`, clamped to valid segments.
fn segment(points: &[Waypoint], t: f64) -> usize {
    let idx = points.partition_point(|p| p.t <= t);
    idx.saturating_sub(1).min(points.len() - 2)
}

fn linear_waypoints(points: &[Waypoint], t: f64) -> (f64, f64) {
    let first = points[0];
    let last = points[points.len() - 1];
    if t <= first.t {
        return (first.x, first.y);
    }
    if t >= last.t {
        return (last.x, last.y);
    }
    let i = segment(points, t);
    let (a, b) = (points[i], points[i + 1]);
    let w = (t - a.t) / (b.t - a.t);
    (a.x + w * (b.x - a.x), a.y + w * (b.y - a.y))
}

/// Second derivatives of a natural cubic spline through `(ts, vs)`.
fn natural_spline_moments(ts: &[f64], vs: &[f64]) -> Vec<f64> {
    let n = ts.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior nodes.
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = ts[i] - ts[i - 1];
        let h1 = ts[i + 1] - ts[i];
        let lower = h0;
        diag[i] = 2.0 * (h0 + h1);
        upper[i] = h1;
        rhs[i] = 6.0 * ((vs[i + 1] - vs[i]) / h1 - (vs[i] - vs[i - 1]) / h0);
        if i > 1 {
            let f = lower / diag[i - 1];
            diag[i] -= f * upper[i - 1];
            rhs[i] -= f * rhs[i - 1];
        }
    }
    for i in (1..n - 1).rev() {
        let next = if i + 1 < n - 1 { upper[i] * m[i + 1] } else { 0.0 };
        m[i] = (rhs[i] - next) / diag[i];
    }
    m
}

fn cubic_waypoints(points: &[Waypoint], t: f64) -> (f64, f64) {
    let first = points[0];
    let last = points[points.len() - 1];
    if t <= first.t {
        return (first.x, first.y);
    }
    if t >= last.t {
        return (last.x, last.y);
    }
    let ts: Vec<f64> = points.iter().map(|p| p.t).collect();
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    let mx = natural_spline_moments(&ts, &xs);
    let my = natural_spline_moments(&ts, &ys);
    let i = segment(points, t);
    let h = ts[i + 1] - ts[i];
    let a = (ts[i + 1] - t) / h;
    let b = (t - ts[i]) / h;
    let eval = |v: &[f64], m: &[f64]| {
        a * v[i] + b * v[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0
    };
    (eval(&xs, &mx), eval(&ys, &my))
}

/// Parameters of the constant-depth preset (changing modulation type).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcPresetParams {
    pub duration: f64,
    /// Forward sweep before the reversal, in turns.
    pub forward_turns: f64,
    /// Fraction of the duration spent on the forward sweep.
    pub turn_fraction: f64,
}

impl Default for ArcPresetParams {
    fn default() -> Self {
        Self {
            duration: 5e-3,
            forward_turns: 0.9,
            turn_fraction: 0.6,
        }
    }
}

/// Start point of the constant-depth trajectory.
pub const FIG4_TOP_START: (f64, f64) = (-3.7 * SQRT_2, 5.8 * SQRT_2);
/// End point of the constant-depth trajectory.
pub const FIG4_TOP_END: (f64, f64) = (-5.3 * SQRT_2, -4.3 * SQRT_2);

/// Constant-depth arc: starts at [`FIG4_TOP_START`], sweeps forward almost a full
/// cycle, reverses and stops in the direction of [`FIG4_TOP_END`]. The depth is
/// fixed to the start point's, so the end point matches the target direction
/// exactly and its radius to within 1%.
pub fn fig4_top_preset() -> TrajectorySpec {
    fig4_top_preset_with(ArcPresetParams::default())
}

pub fn fig4_top_preset_with(params: ArcPresetParams) -> TrajectorySpec {
    let (sx, sy) = FIG4_TOP_START;
    let (ex, ey) = FIG4_TOP_END;
    let start = sy.atan2(sx);
    let peak = params.forward_turns * TAU;
    let end = (ey.atan2(ex) - start).rem_euclid(TAU);
    TrajectorySpec {
        duration: params.duration,
        kind: TrajectoryKind::Arc {
            radius: sx.hypot(sy),
            phase_start: start,
            phase: PhaseProfile::SweepReverse {
                peak,
                end,
                turn_fraction: params.turn_fraction,
            },
        },
    }
}

/// Parameters of the decreasing-depth preset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpiralPresetParams {
    pub duration: f64,
    pub radius_start: f64,
    pub radius_end: f64,
    pub phase_start: f64,
    /// Total phase advance in turns.
    pub turns: f64,
}

impl Default for SpiralPresetParams {
    fn default() -> Self {
        Self {
            duration: 5e-3,
            radius_start: 7.0 * SQRT_2,
            radius_end: 1.5 * SQRT_2,
            phase_start: 0.0,
            turns: 1.25,
        }
    }
}

/// Spiral with linearly decreasing modulation depth.
pub fn fig4_bottom_preset() -> TrajectorySpec {
    fig4_bottom_preset_with(SpiralPresetParams::default())
}

pub fn fig4_bottom_preset_with(params: SpiralPresetParams) -> TrajectorySpec {
    TrajectorySpec {
        duration: params.duration,
        kind: TrajectoryKind::Spiral {
            radius_start: params.radius_start,
            radius_end: params.radius_end,
            phase_start: params.phase_start,
            phase: PhaseProfile::Linear {
                rate: params.turns * TAU / params.duration,
            },
        },
    }
}
