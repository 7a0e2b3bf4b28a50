//! Simulator-backed checks of the measurement chain against analytic
//! answers.

use coaxscan_core::axis::{extract_profiles, reconstruct, AxisConfig, ProfileConfig};
use coaxscan_core::pipeline::{measure, Measurement, PipelineConfig};
use coaxscan_core::scan::unroll;
use coaxscan_core::segmentation::{sor_filter, SorConfig};
use coaxscan_core::simulator::{inject_outliers, scan_drill, DrillSpec, GroundTruth, OcclusionModel};
use coaxscan_core::{Error, Label, ScanMeta, ScanSet};

fn meta() -> ScanMeta {
    ScanMeta::new(1000, 1350, 150.0, 5.0)
}

fn simulate(spec: &DrillSpec, noise: f64, seed: u64) -> (ScanSet, GroundTruth) {
    scan_drill(spec, &meta(), &OcclusionModel::default(), noise, seed).unwrap()
}

fn measured(spec: &DrillSpec, noise: f64, seed: u64) -> Measurement {
    let (scan, _) = simulate(spec, noise, seed);
    measure(&scan, &PipelineConfig::default()).unwrap()
}

/// Depth at which the sensor ray at turntable angle `theta` meets the
/// blade-back cylinder around the bent axis.
fn back_depth(spec: &DrillSpec, x: f64, theta: f64) -> f64 {
    let c = spec.axis_center(x);
    let dir = [theta.sin(), theta.cos()];
    let along = c[0] * dir[0] + c[1] * dir[1];
    let across = c[0] * dir[1] - c[1] * dir[0];
    meta().axis_distance - (along + (spec.radius().powi(2) - across * across).sqrt())
}

#[test]
fn sor_removes_injected_outliers() {
    let (mut scan, mut truth) = simulate(&DrillSpec::default(), 0.003, 3);
    let injected = inject_outliers(&mut scan, &mut truth, 0.01, [0.5, 3.0], 3);
    assert!(injected.len() > 1000);
    let cloud = unroll(&scan.frames, &scan.meta).unwrap();
    let kept: Vec<_> = cloud
        .points
        .iter()
        .filter(|p| matches!(truth.labels[p.source], Label::BladeBack | Label::Outlier))
        .collect();
    let pts: Vec<[f64; 3]> = kept.iter().map(|p| [p.x, p.y, p.z]).collect();
    let out = sor_filter(&pts, &SorConfig::default()).unwrap();
    let (mut caught, mut outliers, mut lost, mut inliers) = (0, 0, 0, 0);
    for (p, keep) in kept.iter().zip(&out.keep) {
        if truth.labels[p.source] == Label::Outlier {
            outliers += 1;
            caught += !keep as usize;
        } else {
            inliers += 1;
            lost += !keep as usize;
        }
    }
    let caught = caught as f64 / outliers as f64;
    let lost = lost as f64 / inliers as f64;
    assert!(caught >= 0.95, "removed {caught:.4} of injected outliers");
    assert!(lost <= 0.005, "removed {lost:.4} of inliers");
}

#[test]
fn coaxiality_does_not_depend_on_start_angle() {
    let spec = DrillSpec::default().with_bend(0.5, 30.0, 75.0);
    let m = measured(&spec, 0.0, 11);
    let values: Vec<f64> = [0.0, 15.0, 30.0, 45.0]
        .iter()
        .map(|&theta| {
            let mut cfg = AxisConfig::default();
            cfg.profile.theta_deg = theta;
            reconstruct(&m.points, &m.report_meta(), &cfg).unwrap().coaxiality
        })
        .collect();
    let hi = values.iter().cloned().fold(f64::MIN, f64::max);
    let lo = values.iter().cloned().fold(f64::MAX, f64::min);
    assert!(hi - lo <= 0.05 * spec.true_coaxiality(), "{values:?}");
}

trait ReportMeta {
    fn report_meta(&self) -> ScanMeta;
}

impl ReportMeta for Measurement {
    fn report_meta(&self) -> ScanMeta {
        let mut m = meta();
        m.axis_distance = self.report.axis_distance;
        m
    }
}

/// A grid position counts as measured when both profiles of a pair have a
/// bin within half a bin width; elsewhere the spline is bridging a gap.
fn supported(a: &coaxscan_core::axis::AxialProfile, b: &coaxscan_core::axis::AxialProfile, x: f64) -> bool {
    let near = |p: &coaxscan_core::axis::AxialProfile| p.x.iter().any(|bx| (bx - x).abs() <= 0.5);
    near(a) && near(b)
}

#[test]
fn deviation_profiles_follow_the_bend_projections() {
    for phi in [0.0, 45.0, 90.0] {
        let spec = DrillSpec::default().with_bend(0.5, phi, 70.0);
        let a = measured(&spec, 0.0, 5).axis;
        let p = &a.profiles;
        let (mut worst, mut checked, mut total): (f64, usize, usize) = (0.0, 0, 0);
        for ((x, v), h) in a.absv.x.iter().zip(&a.absv.z).zip(&a.absh.z) {
            let c = spec.axis_center(*x);
            total += 2;
            if supported(&p[0], &p[2], *x) {
                worst = worst.max((v - 2.0 * c[1].abs()).abs());
                checked += 1;
            }
            if supported(&p[1], &p[3], *x) {
                worst = worst.max((h - 2.0 * c[0].abs()).abs());
                checked += 1;
            }
        }
        assert!(checked * 3 >= total, "phi {phi}: only {checked} of {total} samples measured");
        assert!(worst <= 0.01, "phi {phi}: worst {worst}");
    }
}

#[test]
fn oblique_peak_is_twice_the_center_offset() {
    let spec = DrillSpec::default().with_bend(0.5, 45.0, 70.0);
    let a = measured(&spec, 0.0, 6).axis;
    let peak = a.squabs.z.iter().cloned().fold(0.0, f64::max);
    let c = spec.axis_center(a.peak_x);
    let expected = 2.0 * c[0].hypot(c[1]);
    assert!((peak - expected).abs() <= 0.05 * expected, "{peak} vs {expected}");
}

#[test]
fn zero_angle_profile_matches_the_analytic_surface() {
    let spec = DrillSpec::default().with_bend(0.5, 30.0, 70.0);
    let a = measured(&spec, 0.0, 7).axis;
    let p = &a.profiles[0];
    assert!(p.x.len() > 40);
    for (x, z) in p.x.iter().zip(&p.z) {
        let want = back_depth(&spec, *x, 0.0);
        assert!((z - want).abs() <= 0.005, "x {x}: {z} vs {want}");
    }
}

#[test]
fn straight_part_gives_flat_profiles() {
    let spec = DrillSpec::default().with_bend(0.0, 0.0, 70.0);
    let a = measured(&spec, 0.003, 8).axis;
    for p in &a.profiles {
        for (x, z) in p.x.iter().zip(&p.z) {
            assert!((z - 145.0).abs() <= 0.006, "angle {} x {x}: {z}", p.angle_deg);
        }
    }
}

#[test]
fn erased_angle_is_reported_as_missing_data() {
    let m = measured(&DrillSpec::default(), 0.003, 9);
    let meta = m.report_meta();
    let erase = |points: &mut Vec<_>, half: usize| {
        let mut pts: Vec<coaxscan_core::MeasurementPoint> = std::mem::take(points);
        for p in pts.iter_mut() {
            if p.frame.abs_diff(250) <= half {
                p.label = Label::Background;
            }
        }
        *points = pts;
    };

    // Inside the first window only: the window widens.
    let mut pts = m.points.clone();
    erase(&mut pts, 2);
    let profiles = extract_profiles(&pts, &meta, &ProfileConfig::default()).unwrap();
    assert_eq!(profiles[1].window_frames, 4);

    let mut pts = m.points.clone();
    erase(&mut pts, 10);
    match extract_profiles(&pts, &meta, &ProfileConfig::default()) {
        Err(Error::DataDeficiency { angle_deg }) => assert!((angle_deg - 90.0).abs() < 1e-9),
        other => panic!("expected missing data, got {other:?}"),
    }
}
