//! Measurement uncertainty against the coaxiality tolerance band.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rotation-angle error of the turntable (degrees).
pub const RUNNING_ANGLE_DEG: f64 = 0.001;

/// Default acceptable share of the tolerance band.
pub const MAX_RATIO: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBudget {
    /// Sensor depth repeatability.
    pub delta_z: f64,
    /// Turntable eccentricity.
    pub delta_c: f64,
    /// Radial error from the running angle, `R·(1 − cos 0.001°)`.
    pub delta_eta: f64,
    pub delta_d: f64,
    pub delta_z_p: f64,
    pub delta_r: f64,
    /// Tolerance range, `0.03 + 0.01·L/D_d`.
    pub tolerance: f64,
    pub epsilon: f64,
    /// `R / L`, reported for reference alongside the ratio.
    pub radius_to_length: f64,
}

/// Uncertainty budget for a part of radius `radius`, length `length` and
/// diameter `diameter` (all mm).
pub fn budget(delta_z: f64, delta_c: f64, radius: f64, length: f64, diameter: f64) -> Result<UncertaintyBudget> {
    for (name, v) in [("delta_z", delta_z), ("delta_c", delta_c)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
        }
    }
    for (name, v) in [("radius", radius), ("length", length), ("diameter", diameter)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    let delta_eta = radius * (1.0 - RUNNING_ANGLE_DEG.to_radians().cos());
    let delta_d = delta_z + delta_c;
    let delta_z_p = delta_z + delta_c;
    let delta_r = delta_d + delta_z_p + delta_eta;
    let tolerance = 0.03 + 0.01 * (length / diameter);
    Ok(UncertaintyBudget {
        delta_z,
        delta_c,
        delta_eta,
        delta_d,
        delta_z_p,
        delta_r,
        tolerance,
        epsilon: delta_r / tolerance,
        radius_to_length: radius / length,
    })
}

/// `ε ≤ max_ratio`, inclusive.
pub fn within_spec(budget: &UncertaintyBudget, max_ratio: f64) -> bool {
    budget.epsilon <= max_ratio
}
