//! Scan data model and the two coordinate maps applied to raw profiles.
//!
//! A rotating scan is a sequence of [`SensorFrame`]s, one per encoder
//! trigger. Each frame is a profile of `(x, z)` samples in the sensor
//! plane: `x` runs along the turntable axis and `z` is the depth measured
//! from the sensor. Two views are derived from it:
//!
//! * the measurement frame, where frame `i` is rotated back by its
//!   turntable angle so the part appears as a 3-D solid
//!   ([`to_measurement_frame`], [`MeasurementCloud`]);
//! * the unrolled view, where the rotation angle becomes a linear
//!   coordinate and depth is kept as-is ([`unroll`], [`UnrolledCloud`]).
//!   Segmentation works on this view.
//!
//! All lengths are millimetres.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One `(x, z)` sample of a sensor profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPoint {
    pub x: f64,
    pub z: f64,
}

impl SensorPoint {
    pub fn new(x: f64, z: f64) -> Self {
        Self { x, z }
    }
}

/// A single triggered profile. Samples with no return are simply absent,
/// so frames may have different lengths.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorFrame {
    pub index: usize,
    pub points: Vec<SensorPoint>,
}

impl SensorFrame {
    pub fn new(index: usize, points: Vec<SensorPoint>) -> Self {
        Self { index, points }
    }

    /// Sorts samples by ascending `x`.
    pub fn sort_by_x(&mut self) {
        self.points.sort_by(|a, b| a.x.total_cmp(&b.x));
    }
}

/// Acquisition metadata for one revolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanMeta {
    /// Number of triggers per revolution.
    pub frame_count: usize,
    /// Nominal samples per profile (frames may hold fewer after dropout).
    pub points_per_frame: usize,
    /// Distance from the sensor origin to the turntable axis.
    pub axis_distance: f64,
    /// Unroll coefficient: the unrolled view maps one revolution to
    /// `2π·gamma` millimetres.
    pub gamma: f64,
}

impl ScanMeta {
    pub fn new(frame_count: usize, points_per_frame: usize, axis_distance: f64, gamma: f64) -> Self {
        Self {
            frame_count,
            points_per_frame,
            axis_distance,
            gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_count < 4 {
            return Err(Error::Config(format!(
                "frame_count must be at least 4, got {}",
                self.frame_count
            )));
        }
        if !(self.axis_distance > 0.0) {
            return Err(Error::Config(format!(
                "axis_distance_D must be positive, got {}",
                self.axis_distance
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Turntable angle of frame `index`, in radians.
    ///
    /// The fraction `index / frame_count` is formed first so large frame
    /// counts do not accumulate rounding in the degree scale.
    pub fn frame_angle(&self, index: usize) -> f64 {
        let frac = (index % self.frame_count) as f64 / self.frame_count as f64;
        TAU * frac
    }

    /// Angular spacing between consecutive frames, in radians.
    pub fn angle_step(&self) -> f64 {
        TAU / self.frame_count as f64
    }
}

/// Ordered frames of one full revolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSet {
    pub meta: ScanMeta,
    pub frames: Vec<SensorFrame>,
}

impl ScanSet {
    pub fn new(meta: ScanMeta, frames: Vec<SensorFrame>) -> Self {
        Self { meta, frames }
    }

    pub fn point_count(&self) -> usize {
        self.frames.iter().map(|f| f.points.len()).sum()
    }

    /// Iterates `(frame index, sample)` pairs in scan order.
    pub fn samples(&self) -> impl Iterator<Item = (usize, SensorPoint)> + '_ {
        self.frames
            .iter()
            .flat_map(|f| f.points.iter().map(move |p| (f.index, *p)))
    }
}

/// Per-point class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    #[default]
    Unlabeled,
    BladeBack,
    Background,
    Outlier,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Unlabeled => "unlabeled",
            Label::BladeBack => "blade_back",
            Label::Background => "background",
            Label::Outlier => "outlier",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s.trim() {
            "unlabeled" => Some(Label::Unlabeled),
            "blade_back" => Some(Label::BladeBack),
            "background" => Some(Label::Background),
            "outlier" => Some(Label::Outlier),
            _ => None,
        }
    }
}

/// Coordinate axis selector used by the pass-through filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Access to a point's coordinates by axis.
pub trait Coordinates {
    fn coord(&self, axis: Axis) -> f64;
}

/// A point in the measurement (turntable) frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub frame: usize,
    pub label: Label,
}

impl Coordinates for MeasurementPoint {
    fn coord(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasurementCloud {
    pub points: Vec<MeasurementPoint>,
}

/// A point of the unrolled view. `source` is the sample's position in
/// scan order so labels can be mapped back to the raw scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnrolledPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub frame: usize,
    pub source: usize,
}

impl Coordinates for UnrolledPoint {
    fn coord(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UnrolledCloud {
    pub points: Vec<UnrolledPoint>,
}

impl UnrolledCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Maps one sensor frame into the measurement frame.
///
/// Frame `i` sits at turntable angle `θ = 2π·i/I`; a sample at depth `z`
/// lies `D − z` from the axis along that direction.
pub fn to_measurement_frame(frame: &SensorFrame, meta: &ScanMeta) -> Result<Vec<MeasurementPoint>> {
    if meta.frame_count == 0 {
        return Err(Error::Config("frame_count must be positive".into()));
    }
    if !(meta.axis_distance > 0.0) {
        return Err(Error::Config(format!(
            "axis_distance_D must be positive, got {}",
            meta.axis_distance
        )));
    }
    if frame.index >= meta.frame_count {
        return Err(Error::Config(format!(
            "frame index {} not below frame_count {}",
            frame.index, meta.frame_count
        )));
    }
    let (sin, cos) = meta.frame_angle(frame.index).sin_cos();
    Ok(frame
        .points
        .iter()
        .map(|p| {
            let r = meta.axis_distance - p.z;
            MeasurementPoint {
                x: p.x,
                y: r * sin,
                z: r * cos,
                frame: frame.index,
                label: Label::Unlabeled,
            }
        })
        .collect())
}

/// Maps a whole scan into the measurement frame.
pub fn scan_to_measurement(scan: &ScanSet) -> Result<MeasurementCloud> {
    let mut points = Vec::with_capacity(scan.point_count());
    for frame in &scan.frames {
        points.extend(to_measurement_frame(frame, &scan.meta)?);
    }
    Ok(MeasurementCloud { points })
}

/// Unrolls frames so that rotation becomes the linear `y` coordinate:
/// `y = 2π·γ·i/I`, with `x` and `z` copied from the sensor.
pub fn unroll(frames: &[SensorFrame], meta: &ScanMeta) -> Result<UnrolledCloud> {
    if !(meta.gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be positive, got {}", meta.gamma)));
    }
    if meta.frame_count == 0 {
        return Err(Error::Config("frame_count must be positive".into()));
    }
    let mut points = Vec::with_capacity(frames.iter().map(|f| f.points.len()).sum());
    let mut source = 0;
    for frame in frames {
        let frac = frame.index as f64 / meta.frame_count as f64;
        let y = TAU * meta.gamma * frac;
        for p in &frame.points {
            points.push(UnrolledPoint {
                x: p.x,
                y,
                z: p.z,
                frame: frame.index,
                source,
            });
            source += 1;
        }
    }
    Ok(UnrolledCloud { points })
}

/// Keeps points whose coordinate along `axis` lies in `[min, max]`.
/// Order is preserved.
pub fn passthrough_filter<P: Coordinates + Clone>(
    points: &[P],
    axis: Axis,
    min: f64,
    max: f64,
) -> Result<Vec<P>> {
    if !(min < max) {
        return Err(Error::Config(format!(
            "pass-through bounds must satisfy min < max, got [{min}, {max}]"
        )));
    }
    Ok(points
        .iter()
        .filter(|p| {
            let v = p.coord(axis);
            v >= min && v <= max
        })
        .cloned()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta(i: usize, d: f64, gamma: f64) -> ScanMeta {
        ScanMeta::new(i, 1, d, gamma)
    }

    fn one(index: usize, x: f64, z: f64) -> SensorFrame {
        SensorFrame::new(index, vec![SensorPoint::new(x, z)])
    }

    #[test]
    fn measurement_frame_at_zero_angle() {
        let p = to_measurement_frame(&one(0, 10.0, 20.0), &meta(360, 150.0, 1.0)).unwrap()[0];
        assert_eq!((p.x, p.y, p.z), (10.0, 0.0, 130.0));
    }

    #[test]
    fn measurement_frame_at_quarter_turn() {
        let p = to_measurement_frame(&one(90, 10.0, 20.0), &meta(360, 150.0, 1.0)).unwrap()[0];
        assert_eq!(p.x, 10.0);
        assert!((p.y - 130.0).abs() < 1e-12);
        assert!(p.z.abs() < 1e-12);
    }

    #[test]
    fn measurement_frame_oblique() {
        // D=150, I=720, i=37, (x=-3.2, z=41.7); θ = 18.5°, r = 108.3
        // y' = 108.3·sin(18.5°), z' = 108.3·cos(18.5°), computed separately.
        let p = to_measurement_frame(&one(37, -3.2, 41.7), &meta(720, 150.0, 1.0)).unwrap()[0];
        assert_eq!(p.x, -3.2);
        assert!((p.y - 34.364_094_288_671_48).abs() < 1e-9, "{}", p.y);
        assert!((p.z - 102.703_451_858_831_39).abs() < 1e-9, "{}", p.z);
    }

    #[test]
    fn measurement_frame_rejects_bad_meta() {
        let f = one(0, 0.0, 0.0);
        assert!(matches!(to_measurement_frame(&f, &meta(0, 150.0, 1.0)), Err(Error::Config(_))));
        assert!(matches!(to_measurement_frame(&f, &meta(360, 0.0, 1.0)), Err(Error::Config(_))));
        assert!(matches!(to_measurement_frame(&f, &meta(360, -1.0, 1.0)), Err(Error::Config(_))));
    }

    #[test]
    fn unroll_examples() {
        let c = unroll(&[one(500, 1.0, 2.0)], &meta(1000, 150.0, 5.0)).unwrap();
        assert!((c.points[0].y - 15.707_963_267_948_966).abs() < 1e-12);
        assert_eq!((c.points[0].x, c.points[0].z), (1.0, 2.0));

        let c = unroll(&[one(0, 1.0, 2.0)], &meta(4, 150.0, 1.0)).unwrap();
        assert_eq!(c.points[0].y, 0.0);

        // 2π·2.5·901/1350
        let c = unroll(&[one(901, 0.0, 0.0)], &meta(1350, 150.0, 2.5)).unwrap();
        assert!((c.points[0].y - 10.483_611_040_312_606).abs() < 1e-9, "{}", c.points[0].y);
    }

    #[test]
    fn unroll_rejects_nonpositive_gamma() {
        assert!(unroll(&[one(0, 0.0, 0.0)], &meta(4, 150.0, 0.0)).is_err());
    }

    #[test]
    fn passthrough_examples() {
        let pts: Vec<UnrolledPoint> = [1.0, 5.0, 200.0]
            .iter()
            .enumerate()
            .map(|(i, &z)| UnrolledPoint { x: 0.0, y: 0.0, z, frame: i, source: i })
            .collect();
        let kept = passthrough_filter(&pts, Axis::Z, 0.0, 100.0).unwrap();
        assert_eq!(kept.iter().map(|p| p.z).collect::<Vec<_>>(), vec![1.0, 5.0]);

        let empty: Vec<UnrolledPoint> = Vec::new();
        assert!(passthrough_filter(&empty, Axis::Z, 0.0, 1.0).unwrap().is_empty());

        assert!(matches!(passthrough_filter(&pts, Axis::Z, 1.0, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn passthrough_matches_brute_count() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<MeasurementPoint> = (0..10_000)
            .map(|i| MeasurementPoint {
                x: rng.gen_range(-50.0..50.0),
                y: rng.gen_range(-50.0..50.0),
                z: rng.gen_range(-50.0..50.0),
                frame: i,
                label: Label::Unlabeled,
            })
            .collect();
        let mut ys: Vec<f64> = pts.iter().map(|p| p.y).collect();
        ys.sort_by(f64::total_cmp);
        let (lo, hi) = (ys[1000], ys[9000]);
        let mut brute = 0;
        for p in &pts {
            if lo <= p.y && p.y <= hi {
                brute += 1;
            }
        }
        assert_eq!(passthrough_filter(&pts, Axis::Y, lo, hi).unwrap().len(), brute);
        assert_eq!(brute, 8001);
    }

    proptest! {
        #[test]
        fn radius_and_angle_preserved(i in 0usize..1000, x in -50.0f64..50.0, z in 0.0f64..149.0) {
            let m = meta(1000, 150.0, 1.0);
            let p = to_measurement_frame(&one(i, x, z), &m).unwrap()[0];
            let r = (p.y * p.y + p.z * p.z).sqrt();
            prop_assert!((r - (150.0 - z)).abs() < 1e-9);
            let ang = p.y.atan2(p.z).rem_euclid(TAU);
            let expected = m.frame_angle(i);
            let diff = (ang - expected).rem_euclid(TAU);
            prop_assert!(diff.min(TAU - diff) < 1e-9);
        }

        #[test]
        fn unroll_injective(i in 0usize..5000, j in 0usize..5000) {
            prop_assume!(i != j);
            let m = meta(5000, 150.0, 3.0);
            let c = unroll(&[one(i, 0.0, 0.0), one(j, 0.0, 0.0)], &m).unwrap();
            prop_assert!(c.points[0].y != c.points[1].y);
        }

        #[test]
        fn passthrough_idempotent(zs in proptest::collection::vec(-10.0f64..10.0, 0..64), lo in -5.0f64..0.0, hi in 0.1f64..5.0) {
            let pts: Vec<UnrolledPoint> = zs.iter().enumerate()
                .map(|(i, &z)| UnrolledPoint { x: 0.0, y: 0.0, z, frame: i, source: i }).collect();
            let once = passthrough_filter(&pts, Axis::Z, lo, hi).unwrap();
            let twice = passthrough_filter(&once, Axis::Z, lo, hi).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
