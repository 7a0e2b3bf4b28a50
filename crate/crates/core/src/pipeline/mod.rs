//! Stage wiring: scan in, report out.

mod config;

pub use config::{PipelineConfig, KEYS};

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::axis::{self, AxisResult, Section};
use crate::calibration::{self, CalibrationResult};
use crate::error::Error;
use crate::io::{self, ModelExport};
use crate::scan::{self, Axis, Label, MeasurementPoint, ScanMeta, ScanSet, UnrolledCloud};
use crate::segmentation::{self, SegmentationResult};
use crate::uncertainty::{self, UncertaintyBudget};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Io,
    ScanModel,
    Calibration,
    Segmentation,
    AxisReconstruction,
    Uncertainty,
    Simulator,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Io => "io",
            Stage::ScanModel => "scan-model",
            Stage::Calibration => "calibration",
            Stage::Segmentation => "segmentation",
            Stage::AxisReconstruction => "axis-reconstruction",
            Stage::Uncertainty => "uncertainty",
            Stage::Simulator => "simulator",
        }
    }
}

/// An error tagged with the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl StageError {
    pub fn new(stage: Stage, error: Error) -> Self {
        StageError { stage, error }
    }

    /// I/O, parse and settings failures, as opposed to the measurement
    /// itself failing.
    pub fn is_input_error(&self) -> bool {
        matches!(self.error, Error::Io(_) | Error::Parse { .. } | Error::Json(_))
            || matches!(self.stage, Stage::Io | Stage::Config)
    }

    pub fn hint(&self) -> &'static str {
        match (&self.error, self.stage) {
            (Error::Io(_), _) => "check that the path exists and is readable",
            (Error::Parse { .. }, _) | (Error::Json(_), _) => "fix the file at the reported line",
            (Error::Config(_), _) => "correct the setting in --config or on the command line",
            (Error::DataDeficiency { .. }, _) => {
                "blade back is occluded at that angle; try another theta_deg or widen window_frames"
            }
            (_, Stage::Calibration) => "check that the block and both ladder steps are in view",
            (_, Stage::Segmentation) => "check depth_band and axis_distance_D; the drill surface must fall inside the band",
            (_, Stage::AxisReconstruction) => {
                "check shank_range against the part and that the shank is labelled blade back"
            }
            _ => "rerun with defaults to isolate the failing setting",
        }
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} (hint: {})", self.stage.name(), self.error, self.hint())
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait At<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T> At<T> for crate::Result<T> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|e| StageError::new(stage, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationSummary {
    pub points: usize,
    pub in_band: usize,
    pub blade_back: usize,
    pub background: usize,
    pub outliers: usize,
    pub blocks: usize,
    pub resolved_blocks: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub segmentation_s: f64,
    pub axis_s: f64,
    pub total_s: f64,
}

/// Result of one measurement run. Every key is always present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoaxialityReport {
    pub coaxiality_mm: f64,
    pub benchmark_center: [f64; 2],
    pub benchmark_sections: Vec<Section>,
    pub sections: Vec<Section>,
    pub xsm: Vec<f64>,
    pub peak_x: f64,
    pub theta_deg: f64,
    pub delta_z_s: f64,
    pub axis_distance: f64,
    pub epsilon: f64,
    pub within_spec: bool,
    pub uncertainty: UncertaintyBudget,
    pub segmentation: SegmentationSummary,
    pub warnings: Vec<String>,
    pub duration_s: f64,
    pub timings: Timings,
}

/// Everything a measurement produced, for plotting and inspection.
#[derive(Debug)]
pub struct Measurement {
    pub report: CoaxialityReport,
    pub axis: AxisResult,
    pub segmentation: SegmentationResult,
    /// Labelled points in the turntable frame, in scan order.
    pub points: Vec<MeasurementPoint>,
}

/// Scan metadata with the configured distance and unroll overrides.
pub fn effective_meta(scan: &ScanSet, cfg: &PipelineConfig) -> StageResult<ScanMeta> {
    let mut meta = scan.meta;
    if let Some(path) = &cfg.calibration_file {
        let text = std::fs::read_to_string(path).map_err(|e| StageError::new(Stage::Io, e.into()))?;
        let cal: CalibrationResult =
            serde_json::from_str(&text).map_err(|e| StageError::new(Stage::Io, e.into()))?;
        meta.axis_distance = cal.axis_distance;
    }
    if let Some(d) = cfg.axis_distance {
        meta.axis_distance = d;
    }
    if let Some(g) = cfg.gamma {
        meta.gamma = g;
    }
    meta.validate().at(Stage::ScanModel)?;
    Ok(meta)
}

/// Unrolls and band-filters the scan.
pub fn prepare(scan: &ScanSet, meta: &ScanMeta, cfg: &PipelineConfig) -> StageResult<UnrolledCloud> {
    let cloud = scan::unroll(&scan.frames, meta).at(Stage::ScanModel)?;
    let [lo, hi] = cfg.band(meta.axis_distance);
    let points = scan::passthrough_filter(&cloud.points, Axis::Z, lo, hi).at(Stage::ScanModel)?;
    Ok(UnrolledCloud { points })
}

/// Segmentation of a scan, with labels in scan order.
pub fn segment_scan(scan: &ScanSet, cfg: &PipelineConfig) -> StageResult<(SegmentationResult, UnrolledCloud, Vec<Label>)> {
    cfg.validate().at(Stage::Config)?;
    let meta = effective_meta(scan, cfg)?;
    let cloud = prepare(scan, &meta, cfg)?;
    let seg = segmentation::segment(&cloud, &meta, &cfg.segmentation(&meta)).at(Stage::Segmentation)?;
    let mut labels = vec![Label::Background; scan.point_count()];
    for (p, l) in cloud.points.iter().zip(&seg.labels) {
        labels[p.source] = *l;
    }
    Ok((seg, cloud, labels))
}

/// Full measurement of one drill scan.
pub fn measure(scan: &ScanSet, cfg: &PipelineConfig) -> StageResult<Measurement> {
    let t0 = Instant::now();
    let (seg, cloud, labels) = segment_scan(scan, cfg)?;
    let meta = effective_meta(scan, cfg)?;
    let t1 = Instant::now();

    let mut points = Vec::with_capacity(scan.point_count());
    for f in &scan.frames {
        points.extend(scan::to_measurement_frame(f, &meta).at(Stage::ScanModel)?);
    }
    for (p, l) in points.iter_mut().zip(&labels) {
        p.label = *l;
    }
    let axis = axis::reconstruct(&points, &meta, &cfg.axis).at(Stage::AxisReconstruction)?;
    let t2 = Instant::now();

    let budget = uncertainty::budget(cfg.delta_z, cfg.delta_c, cfg.part_diameter / 2.0, cfg.part_length, cfg.part_diameter)
        .at(Stage::Uncertainty)?;
    let mut warnings = seg.warnings.clone();
    warnings.extend(axis.warnings.iter().cloned());
    let summary = SegmentationSummary {
        points: scan.point_count(),
        in_band: cloud.len(),
        blade_back: seg.count(Label::BladeBack),
        background: scan.point_count() - seg.count(Label::BladeBack) - seg.count(Label::Outlier),
        outliers: seg.count(Label::Outlier),
        blocks: seg.blocks.len(),
        resolved_blocks: seg.blocks.iter().filter(|b| b.resolved).count(),
        converged: seg.converged,
    };
    let total = t2.duration_since(t0).as_secs_f64();
    let report = CoaxialityReport {
        coaxiality_mm: axis.coaxiality,
        benchmark_center: axis.benchmark_center,
        benchmark_sections: axis.benchmark_sections.clone(),
        sections: axis.sections.clone(),
        xsm: axis.xsm.clone(),
        peak_x: axis.peak_x,
        theta_deg: cfg.axis.profile.theta_deg,
        delta_z_s: cfg.axis.delta_z_s,
        axis_distance: meta.axis_distance,
        epsilon: budget.epsilon,
        within_spec: uncertainty::within_spec(&budget, cfg.max_ratio),
        uncertainty: budget,
        segmentation: summary,
        warnings,
        duration_s: total,
        timings: Timings {
            segmentation_s: t1.duration_since(t0).as_secs_f64(),
            axis_s: t2.duration_since(t1).as_secs_f64(),
            total_s: total,
        },
    };
    Ok(Measurement { report, axis, segmentation: seg, points })
}

/// Calibration of a stepped-block scan.
pub fn calibrate(scan: &ScanSet, cfg: &PipelineConfig) -> StageResult<CalibrationResult> {
    cfg.validate().at(Stage::Config)?;
    calibration::calibrate(scan, &cfg.calibration).at(Stage::Calibration)
}

/// Per-block mixture, as exported next to segmentation labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockModel {
    pub block: usize,
    pub resolved: bool,
    #[serde(flatten)]
    pub model: ModelExport,
}

pub fn block_models(seg: &SegmentationResult) -> Vec<BlockModel> {
    seg.blocks
        .iter()
        .filter_map(|b| {
            b.model.as_ref().map(|m| BlockModel {
                block: b.block,
                resolved: b.resolved,
                model: ModelExport::new(m, b.iterations, b.loglik),
            })
        })
        .collect()
}

fn create(dir: &Path, name: &str) -> crate::Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(dir.join(name))?))
}

/// Writes plot series into `dir`: the four profiles, the three deviation
/// curves, and each cross section's points with its fitted circle.
pub fn write_plots(dir: &Path, m: &Measurement, cfg: &PipelineConfig) -> crate::Result<()> {
    std::fs::create_dir_all(dir)?;
    for p in &m.axis.profiles {
        let name = format!("profile_{}.csv", p.angle_index);
        io::write_series_csv(create(dir, &name)?, &["x", "z"], &[&p.x, &p.z])?;
    }
    let a = &m.axis;
    io::write_series_csv(
        create(dir, "deviation.csv")?,
        &["x", "absv", "absh", "squabs"],
        &[&a.squabs.x, &a.absv.z, &a.absh.z, &a.squabs.z],
    )?;
    let mut w = csv_sections(create(dir, "sections.csv")?)?;
    for (k, s) in a.benchmark_sections.iter().chain(&a.sections).enumerate() {
        let kind = if k < a.benchmark_sections.len() { "benchmark" } else { "max_deviation" };
        for q in axis::section_points(&m.points, s.x, cfg.axis.section.half_width) {
            let err = (q[0] - s.center[0]).hypot(q[1] - s.center[1]) - s.radius;
            writeln!(w, "{k},{kind},{},{},{},{},{},{},{}", s.x, q[0], q[1], s.center[0], s.center[1], s.radius, err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_sections<W: Write>(mut w: W) -> crate::Result<W> {
    writeln!(w, "section,kind,x,y,z,center_y,center_z,radius,radial_error")?;
    Ok(w)
}
