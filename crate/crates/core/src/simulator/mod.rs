//! Synthetic line-laser scans with known ground truth.
//!
//! Twist drills are modelled as a cylindrical shank followed by a fluted
//! working part whose cross section is a ladder of concentric arcs (blade
//! back, recessed blade lip, deep groove) swept along a helix. The working
//! axis may carry a single parabolic bow, which fixes the true coaxiality.
//! Each frame casts the sensor ray from the turntable axis outward, keeps
//! the outermost surface hit, and drops it if it violates the incidence
//! limit, falls in the camera's shadow or leaves the depth of field.

mod block;
mod drill;

pub use block::{scan_calibration_block, CalibrationBlock, CalibrationTruth};
pub use drill::{inject_outliers, scan_drill, Bend, DrillSpec, GroundTruth, OcclusionModel, Region};
