//! Sensor pose checks and axis distance from a stepped-shaft block.
//!
//! Each frame of a calibration scan shows the collar of the block as a
//! nearer plateau between two depth jumps. The plateau ends next to the
//! jumps are the ladder endpoints B and C, and the frame where their depth
//! sum is smallest is the one where the sensor faces the block squarely.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan::{ScanSet, SensorFrame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleIiCheck {
    pub pass: bool,
    /// `|z_d − z_a|`.
    pub delta_z: f64,
    /// Largest mismatch between consecutive marker spacings.
    pub spacing_residual: f64,
}

/// Checks that four evenly spaced markers lie on a line parallel to `x`.
pub fn check_rule_ii(markers: &[[f64; 2]; 4], delta_z_threshold: f64, spacing_tolerance: f64) -> Result<RuleIiCheck> {
    for w in markers.windows(2) {
        if !(w[1][0] > w[0][0]) {
            return Err(Error::Degenerate(format!(
                "marker x coordinates must be strictly increasing, got {} then {}",
                w[0][0], w[1][0]
            )));
        }
    }
    let s = [markers[1][0] - markers[0][0], markers[2][0] - markers[1][0], markers[3][0] - markers[2][0]];
    let spacing_residual = (s[0] - s[1]).abs().max((s[1] - s[2]).abs());
    let delta_z = (markers[3][1] - markers[0][1]).abs();
    Ok(RuleIiCheck {
        pass: spacing_residual <= spacing_tolerance && delta_z <= delta_z_threshold,
        delta_z,
        spacing_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosestFrame {
    /// Position in the sequences.
    pub index: usize,
    /// The minimum sits at either end, so it has only one neighbour, and
    /// no interior position reaches the same sum.
    pub at_boundary: bool,
}

/// Position minimising `z_B + z_C`; the first one wins ties.
pub fn locate_closest_frame(z_b: &[f64], z_c: &[f64]) -> Result<ClosestFrame> {
    if z_b.is_empty() {
        return Err(Error::InsufficientData("no ladder endpoints to search".into()));
    }
    if z_b.len() != z_c.len() {
        return Err(Error::Config(format!(
            "ladder sequences differ in length: {} vs {}",
            z_b.len(),
            z_c.len()
        )));
    }
    let mut best = 0;
    let mut best_sum = f64::INFINITY;
    for (i, (b, c)) in z_b.iter().zip(z_c).enumerate() {
        let s = b + c;
        if !s.is_finite() {
            return Err(Error::Numeric(format!("non-finite ladder depth at position {i}")));
        }
        if s < best_sum {
            best_sum = s;
            best = i;
        }
    }
    let n = z_b.len();
    let interior_tie = n > 2 && (1..n - 1).any(|i| z_b[i] + z_c[i] == best_sum);
    Ok(ClosestFrame { index: best, at_boundary: (best == 0 || best == n - 1) && !interior_tie })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DSolution {
    pub d: f64,
    pub index: usize,
    pub at_boundary: bool,
}

/// Mean ladder depth at the closest frame.
pub fn solve_d(z_b: &[f64], z_c: &[f64]) -> Result<DSolution> {
    let f = locate_closest_frame(z_b, z_c)?;
    Ok(DSolution { d: (z_b[f.index] + z_c[f.index]) / 2.0, index: f.index, at_boundary: f.at_boundary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Largest allowed `|z_d − z_a|` (mm).
    pub delta_z_threshold: f64,
    pub spacing_tolerance: f64,
    /// Smallest depth change between neighbouring samples that counts as
    /// a ladder step (mm).
    pub jump_threshold: f64,
    /// Samples within this axial distance of a marker are averaged (mm).
    pub edge_window: f64,
    /// Collar radius, added to the ladder depth to get the sensor-to-axis
    /// distance (mm).
    pub ladder_radius: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            delta_z_threshold: 0.039,
            spacing_tolerance: 0.1,
            jump_threshold: 1.5,
            edge_window: 1.0,
            ladder_radius: 7.0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta_z_threshold", self.delta_z_threshold),
            ("spacing_tolerance", self.spacing_tolerance),
            ("jump_threshold", self.jump_threshold),
            ("edge_window", self.edge_window),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("calibration {name} must be positive, got {v}")));
            }
        }
        if !(self.ladder_radius >= 0.0) {
            return Err(Error::Config("calibration ladder_radius must be non-negative".into()));
        }
        Ok(())
    }
}

/// Ladder endpoints of one frame as `(x, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ladder {
    pub b: [f64; 2],
    pub c: [f64; 2],
}

fn mean_near(frame: &SensorFrame, lo: f64, hi: f64) -> Option<[f64; 2]> {
    let (mut sx, mut sz, mut n) = (0.0, 0.0, 0usize);
    for p in frame.points.iter().filter(|p| p.x >= lo && p.x <= hi) {
        sx += p.x;
        sz += p.z;
        n += 1;
    }
    (n > 0).then(|| [sx / n as f64, sz / n as f64])
}

/// Finds the collar as the first drop in depth followed by a rise, both at
/// least `jump_threshold`, and averages the plateau next to each jump.
pub fn extract_ladder(frame: &SensorFrame, cfg: &CalibrationConfig) -> Result<Ladder> {
    let mut pts = frame.points.clone();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x));
    let mut start = None;
    let mut end = None;
    for (k, w) in pts.windows(2).enumerate() {
        let dz = w[1].z - w[0].z;
        if start.is_none() && dz <= -cfg.jump_threshold {
            start = Some(k + 1);
        } else if start.is_some() && dz >= cfg.jump_threshold {
            end = Some(k);
            break;
        }
    }
    let (Some(s), Some(e)) = (start, end) else {
        return Err(Error::InsufficientData(format!(
            "frame {}: no ladder step of at least {} mm found",
            frame.index, cfg.jump_threshold
        )));
    };
    let (xb, xc) = (pts[s].x, pts[e].x);
    let plateau = SensorFrame::new(frame.index, pts[s..=e].to_vec());
    let b = mean_near(&plateau, xb, xb + cfg.edge_window).expect("plateau start is inside its own window");
    let c = mean_near(&plateau, xc - cfg.edge_window, xc).expect("plateau end is inside its own window");
    Ok(Ladder { b: [xb, b[1]], c: [xc, c[1]] })
}

/// Markers A..D: the ladder endpoints plus two shaft points one ladder
/// length outside them.
pub fn extract_markers(frame: &SensorFrame, ladder: &Ladder, cfg: &CalibrationConfig) -> Result<[[f64; 2]; 4]> {
    let s = ladder.c[0] - ladder.b[0];
    let half = cfg.edge_window / 2.0;
    let xa = ladder.b[0] - s;
    let xd = ladder.c[0] + s;
    let a = mean_near(frame, xa - half, xa + half);
    let d = mean_near(frame, xd - half, xd + half);
    match (a, d) {
        (Some(a), Some(d)) => Ok([a, ladder.b, ladder.c, d]),
        _ => Err(Error::InsufficientData(format!(
            "frame {}: shaft markers at x = {xa:.3} and x = {xd:.3} are not both in view",
            frame.index
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Mean ladder depth at the closest frame.
    #[serde(rename = "D")]
    pub d: f64,
    /// `D` plus the collar radius: the sensor-to-axis distance used by
    /// the measurement stage.
    pub axis_distance: f64,
    pub i_star: usize,
    pub delta_z: f64,
    pub spacing_residual: f64,
    #[serde(rename = "pass_rule_II")]
    pub pass_rule_ii: bool,
    #[serde(rename = "pass_rule_III")]
    pub pass_rule_iii: bool,
    pub markers: [[f64; 2]; 4],
    pub warnings: Vec<String>,
}

impl CalibrationResult {
    pub fn passed(&self) -> bool {
        self.pass_rule_ii && self.pass_rule_iii
    }
}

/// Runs marker extraction, the pose checks and the depth solve on a scan.
///
/// Frames without a visible ladder are skipped with a warning.
pub fn calibrate(scan: &ScanSet, cfg: &CalibrationConfig) -> Result<CalibrationResult> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let mut frames = Vec::new();
    let mut z_b = Vec::new();
    let mut z_c = Vec::new();
    for (k, f) in scan.frames.iter().enumerate() {
        match extract_ladder(f, cfg) {
            Ok(l) => {
                frames.push(k);
                z_b.push(l.b[1]);
                z_c.push(l.c[1]);
            }
            Err(Error::InsufficientData(m)) => warnings.push(m),
            Err(e) => return Err(e),
        }
    }
    if frames.is_empty() {
        return Err(Error::InsufficientData("no frame shows the calibration ladder".into()));
    }
    let sol = solve_d(&z_b, &z_c)?;
    if sol.at_boundary {
        warnings.push("closest frame is at the end of the scan; rotate the block further".into());
    }
    let frame = &scan.frames[frames[sol.index]];
    let ladder = extract_ladder(frame, cfg)?;
    let markers = extract_markers(frame, &ladder, cfg)?;
    let rule = check_rule_ii(&markers, cfg.delta_z_threshold, cfg.spacing_tolerance)?;
    Ok(CalibrationResult {
        d: sol.d,
        axis_distance: sol.d + cfg.ladder_radius,
        i_star: frame.index,
        delta_z: rule.delta_z,
        spacing_residual: rule.spacing_residual,
        pass_rule_ii: rule.pass,
        pass_rule_iii: !sol.at_boundary,
        markers,
        warnings,
    })
}
