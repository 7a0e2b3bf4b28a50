//! Coaxiality measurement of twist drills from rotating line-laser scans.
//!
//! The pipeline turns one revolution of sensor profiles into a coaxiality
//! value:
//!
//! 1. [`scan`] maps raw profiles into the turntable frame and the unrolled
//!    view, with pass-through filtering.
//! 2. [`calibration`] solves the sensor-to-axis distance from a
//!    stepped-shaft scan.
//! 3. [`segmentation`] separates blade-back points with a block-wise
//!    Gaussian mixture on patch depth modes, then removes stragglers with a
//!    statistical outlier filter.
//! 4. [`axis`] differences opposite profiles, synthesizes the axis
//!    deviation, locates the worst cross sections and fits circles.
//! 5. [`uncertainty`] computes the error budget against the tolerance.
//!
//! [`simulator`] produces scans with known answers for every stage and
//! [`pipeline`] wires the stages together.

// Range checks are written `!(v > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod axis;
pub mod calibration;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod scan;
pub mod segmentation;
pub mod simulator;
pub mod uncertainty;

pub use error::{Error, Result};
pub use scan::{
    Label, MeasurementCloud, MeasurementPoint, ScanMeta, ScanSet, SensorFrame, SensorPoint,
    UnrolledCloud, UnrolledPoint,
};
