//! Shared inputs for the benchmarks: one full-size simulated drill scan and
//! its intermediate products.

use coaxscan_core::pipeline::{prepare, segment_scan, PipelineConfig};
use coaxscan_core::scan::to_measurement_frame;
use coaxscan_core::simulator::{scan_drill, DrillSpec, OcclusionModel};
use coaxscan_core::{MeasurementPoint, ScanMeta, ScanSet, UnrolledCloud};

pub struct Fixture {
    pub scan: ScanSet,
    pub cloud: UnrolledCloud,
    /// Segmented points in the turntable frame.
    pub points: Vec<MeasurementPoint>,
    pub cfg: PipelineConfig,
}

/// 1000 frames of 1350 points, 0.5 mm coaxiality, 3 µm noise.
pub fn drill_fixture() -> Fixture {
    let meta = ScanMeta::new(1000, 1350, 150.0, 5.0);
    let spec = DrillSpec::default().with_bend(0.5, 30.0, 70.0);
    let (scan, _) = scan_drill(&spec, &meta, &OcclusionModel::default(), 0.003, 1).expect("simulation");
    let cfg = PipelineConfig::default();
    let cloud = prepare(&scan, &meta, &cfg).expect("unrolled cloud");
    let (_, _, labels) = segment_scan(&scan, &cfg).expect("segmentation");
    let mut points: Vec<MeasurementPoint> = scan
        .frames
        .iter()
        .flat_map(|f| to_measurement_frame(f, &meta).expect("measurement frame"))
        .collect();
    for (p, l) in points.iter_mut().zip(labels) {
        p.label = l;
    }
    Fixture { scan, cloud, points, cfg }
}

/// Deterministic points on a circle with a small radial ripple.
pub fn ripple_circle(n: usize, center: [f64; 2], radius: f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / n as f64;
            let r = radius + 0.003 * (7.0 * t).sin();
            [center[0] + r * t.cos(), center[1] + r * t.sin()]
        })
        .collect()
}
