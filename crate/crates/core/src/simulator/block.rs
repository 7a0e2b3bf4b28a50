use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::drill::frame_rng;
use crate::error::{Error, Result};
use crate::scan::{ScanMeta, ScanSet, SensorFrame, SensorPoint};

/// Stepped-shaft calibration block: a `diameter_a` shaft of total length
/// `length_a` carrying a `diameter_b` collar of length `length_c` that
/// starts `length_b` from the left end. `length_d` is the remaining shaft.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBlock {
    pub length_a: f64,
    pub length_b: f64,
    pub length_c: f64,
    pub length_d: f64,
    pub diameter_a: f64,
    pub diameter_b: f64,
}

impl Default for CalibrationBlock {
    fn default() -> Self {
        Self {
            length_a: 120.0,
            length_b: 70.0,
            length_c: 10.0,
            length_d: 40.0,
            diameter_a: 8.0,
            diameter_b: 14.0,
        }
    }
}

impl CalibrationBlock {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("l_a", self.length_a),
            ("l_b", self.length_b),
            ("l_c", self.length_c),
            ("l_d", self.length_d),
            ("d_a", self.diameter_a),
            ("d_b", self.diameter_b),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("calibration block {name} must be positive")));
            }
        }
        if (self.length_b + self.length_c + self.length_d - self.length_a).abs() > 1e-9 {
            return Err(Error::Config("calibration block requires l_b + l_c + l_d = l_a".into()));
        }
        if self.diameter_b <= self.diameter_a {
            return Err(Error::Config("collar diameter d_b must exceed shaft diameter d_a".into()));
        }
        Ok(())
    }

    pub fn step_height(&self) -> f64 {
        (self.diameter_b - self.diameter_a) / 2.0
    }

    pub fn collar_span(&self) -> [f64; 2] {
        [self.length_b, self.length_b + self.length_c]
    }

    fn radius_at(&self, x: f64) -> Option<f64> {
        if x < 0.0 || x > self.length_a {
            None
        } else if x >= self.length_b && x <= self.length_b + self.length_c {
            Some(self.diameter_b / 2.0)
        } else {
            Some(self.diameter_a / 2.0)
        }
    }
}

/// Known answers for a simulated calibration scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTruth {
    /// Sensor depth of the collar top for a block exactly on the axis.
    /// This is the value the ladder-endpoint average estimates.
    pub ladder_depth: f64,
    /// Distance from the sensor origin to the turntable axis.
    pub axis_distance: f64,
    pub step_height: f64,
}

/// Scans the block mounted coaxially on the turntable, optionally offset by
/// `eccentricity` (`(y, z)`, turntable runout).
pub fn scan_calibration_block(
    block: &CalibrationBlock,
    meta: &ScanMeta,
    fov_x: [f64; 2],
    eccentricity: [f64; 2],
    noise_sigma: f64,
    seed: u64,
) -> Result<(ScanSet, CalibrationTruth)> {
    block.validate()?;
    meta.validate()?;
    if !(noise_sigma >= 0.0) {
        return Err(Error::Config("noise_sigma must be non-negative".into()));
    }
    if meta.axis_distance <= block.diameter_b {
        return Err(Error::Config("axis_distance_D must clear the calibration block".into()));
    }
    if fov_x[0] > 0.0 || fov_x[1] < block.length_a {
        return Err(Error::Simulation(format!(
            "frame 0: calibration block [0, {}] exceeds the sensor field [{}, {}]",
            block.length_a, fov_x[0], fov_x[1]
        )));
    }
    let noise = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;
    let n = meta.points_per_frame.max(2);
    let step = (fov_x[1] - fov_x[0]) / (n - 1) as f64;
    let ee = eccentricity[0] * eccentricity[0] + eccentricity[1] * eccentricity[1];

    let mut frames = Vec::with_capacity(meta.frame_count);
    for i in 0..meta.frame_count {
        let theta = meta.frame_angle(i);
        let (s, c) = theta.sin_cos();
        let eu = eccentricity[0] * s + eccentricity[1] * c;
        let mut rng = frame_rng(seed, i);
        let mut points = Vec::with_capacity(n);
        for j in 0..n {
            let x = fov_x[0] + step * j as f64;
            let Some(r) = block.radius_at(x) else { continue };
            let t = eu + (eu * eu - ee + r * r).sqrt();
            let mut z = meta.axis_distance - t;
            if noise_sigma > 0.0 {
                z += noise.sample(&mut rng);
            }
            points.push(SensorPoint::new(x, z));
        }
        frames.push(SensorFrame::new(i, points));
    }
    let truth = CalibrationTruth {
        ladder_depth: meta.axis_distance - block.diameter_b / 2.0,
        axis_distance: meta.axis_distance,
        step_height: block.step_height(),
    };
    Ok((ScanSet::new(*meta, frames), truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_visible_in_every_frame() {
        let block = CalibrationBlock::default();
        let meta = ScanMeta::new(90, 1301, 150.0, 1.0);
        let (scan, truth) =
            scan_calibration_block(&block, &meta, [-5.0, 125.0], [0.0, 0.0], 0.0, 0).unwrap();
        assert_eq!(truth.step_height, 3.0);
        for f in &scan.frames {
            let max_jump = f
                .points
                .windows(2)
                .map(|w| (w[1].z - w[0].z).abs())
                .fold(0.0, f64::max);
            assert!((max_jump - 3.0).abs() < 1e-9, "{max_jump}");
        }
    }

    #[test]
    fn rejects_inconsistent_lengths() {
        let block = CalibrationBlock { length_d: 30.0, ..Default::default() };
        assert!(block.validate().is_err());
    }
}
