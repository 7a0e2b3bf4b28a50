//! Axis deviation from four orthogonal profiles, then circle fits where
//! the deviation peaks.
//!
//! Opposite profiles (θ and θ+180°, θ+90° and θ+270°) move in opposite
//! directions when the axis bends, so their absolute difference tracks the
//! bend projected on one plane. The two projections are combined as
//! orthogonal components. Cross sections are cut only where that
//! combined curve is within `delta_z_s` of its maximum, and their fitted
//! centres are compared with the benchmark axis fitted on the shank.

mod circle;
mod spline;

pub use circle::{fit_circle, fit_circle_trimmed, CircleFit};
pub use spline::QuadraticSpline;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan::{Label, MeasurementPoint, ScanMeta};

/// Blade-back depth along `x` at one turntable angle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxialProfile {
    /// 0..4 for θ, θ+90°, θ+180°, θ+270°.
    pub angle_index: usize,
    pub angle_deg: f64,
    /// Frames either side of the target frame that were pooled.
    pub window_frames: usize,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl AxialProfile {
    pub fn spline(&self) -> Result<QuadraticSpline> {
        QuadraticSpline::fit(&self.x, &self.z)
    }

    /// Median spacing between consecutive samples.
    pub fn median_step(&self) -> Option<f64> {
        let mut d: Vec<f64> = self.x.windows(2).map(|w| w[1] - w[0]).collect();
        if d.is_empty() {
            return None;
        }
        d.sort_by(f64::total_cmp);
        Some(d[d.len() / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviationKind {
    /// |p(θ) − p(θ+180°)|
    Absv,
    /// |p(θ+90°) − p(θ+270°)|
    Absh,
    /// √(ABSV² + ABSH²)
    Squabs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationProfile {
    pub kind: DeviationKind,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileConfig {
    pub theta_deg: f64,
    /// Frames pooled either side of each target angle.
    pub window_frames: usize,
    /// Axial bin width for the per-bin median (mm).
    pub bin_width: f64,
    /// Fewest points a bin needs to yield a sample.
    pub min_bin_count: usize,
    /// Bins holding fewer points than this fraction of the median bin are
    /// dropped. Such bins sit where the blade back starts or ends, and
    /// their few points are the ones most often mislabelled.
    pub min_bin_fraction: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig { theta_deg: 0.0, window_frames: 2, bin_width: 1.0, min_bin_count: 3, min_bin_fraction: 0.5 }
    }
}

impl ProfileConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.theta_deg.is_finite() {
            return Err(Error::Config("theta must be finite".into()));
        }
        if !(self.bin_width > 0.0) {
            return Err(Error::Config(format!("profile bin width must be > 0, got {}", self.bin_width)));
        }
        if !(0.0..=1.0).contains(&self.min_bin_fraction) {
            return Err(Error::Config(format!(
                "profile min_bin_fraction must be in [0, 1], got {}",
                self.min_bin_fraction
            )));
        }
        if self.min_bin_count == 0 {
            return Err(Error::Config("profile min_bin_count must be at least 1".into()));
        }
        Ok(())
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn circular_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b) % n;
    d.min(n - d)
}

fn collect_profile(
    points: &[MeasurementPoint],
    meta: &ScanMeta,
    target: usize,
    window: usize,
    cfg: &ProfileConfig,
) -> (Vec<f64>, Vec<f64>) {
    let mut bins: std::collections::BTreeMap<i64, (Vec<f64>, Vec<f64>)> = Default::default();
    for p in points {
        if p.label != Label::BladeBack || circular_distance(p.frame, target, meta.frame_count) > window {
            continue;
        }
        let depth = meta.axis_distance - p.y.hypot(p.z);
        let e = bins.entry((p.x / cfg.bin_width).floor() as i64).or_default();
        e.0.push(p.x);
        e.1.push(depth);
    }
    let mut counts: Vec<f64> = bins.values().map(|b| b.0.len() as f64).collect();
    let floor = if counts.is_empty() { 0.0 } else { cfg.min_bin_fraction * median(&mut counts) };
    let mut xs = Vec::new();
    let mut zs = Vec::new();
    for (_, (mut bx, mut bz)) in bins {
        if bx.len() < cfg.min_bin_count || (bx.len() as f64) < floor {
            continue;
        }
        let x = median(&mut bx);
        if xs.last().is_some_and(|&l| x <= l) {
            continue;
        }
        xs.push(x);
        zs.push(median(&mut bz));
    }
    (xs, zs)
}

/// Collects the four orthogonal blade-back profiles.
///
/// Points within `window_frames` frames of each target angle are pooled
/// and reduced to per-bin medians along `x`. A profile with fewer than
/// three samples is retried once with twice the window before failing.
pub fn extract_profiles(
    points: &[MeasurementPoint],
    meta: &ScanMeta,
    cfg: &ProfileConfig,
) -> Result<[AxialProfile; 4]> {
    cfg.validate()?;
    meta.validate()?;
    let i_count = meta.frame_count as f64;
    let mut out = Vec::with_capacity(4);
    for k in 0..4 {
        let angle = (cfg.theta_deg + 90.0 * k as f64).rem_euclid(360.0);
        let target = ((angle / 360.0 * i_count).round() as usize) % meta.frame_count;
        let mut window = cfg.window_frames;
        let (mut x, mut z) = collect_profile(points, meta, target, window, cfg);
        if x.len() < 3 {
            window = (cfg.window_frames * 2).max(1);
            (x, z) = collect_profile(points, meta, target, window, cfg);
        }
        if x.len() < 3 {
            return Err(Error::DataDeficiency { angle_deg: angle });
        }
        out.push(AxialProfile { angle_index: k, angle_deg: angle, window_frames: window, x, z });
    }
    Ok(out.try_into().expect("four profiles"))
}

/// Uniform grid over the common `x` range of `profiles`, stepped by the
/// median sample spacing.
pub fn shared_grid(profiles: &[&AxialProfile]) -> Result<Vec<f64>> {
    if profiles.is_empty() {
        return Err(Error::InsufficientData("no profiles to grid".into()));
    }
    let lo = profiles.iter().map(|p| p.x[0]).fold(f64::NEG_INFINITY, f64::max);
    let hi = profiles.iter().map(|p| *p.x.last().unwrap()).fold(f64::INFINITY, f64::min);
    if !(hi > lo) {
        return Err(Error::OutOfRange { value: hi, min: lo, max: f64::INFINITY });
    }
    let mut steps: Vec<f64> = profiles.iter().filter_map(|p| p.median_step()).collect();
    if steps.is_empty() {
        return Err(Error::InsufficientData("profiles have no spacing".into()));
    }
    let step = median(&mut steps);
    let n = ((hi - lo) / step).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| lo + k as f64 * step).collect();
    if let Some(last) = grid.last_mut() {
        *last = last.min(hi);
    }
    Ok(grid)
}

/// `|spline_a − spline_b|` on `grid`, which must lie inside both ranges.
pub fn difference_profiles(
    a: &AxialProfile,
    b: &AxialProfile,
    kind: DeviationKind,
    grid: &[f64],
) -> Result<DeviationProfile> {
    if grid.is_empty() {
        return Err(Error::OutOfRange { value: f64::NAN, min: a.x[0], max: b.x[b.x.len() - 1] });
    }
    let sa = a.spline()?;
    let sb = b.spline()?;
    let z = grid
        .iter()
        .map(|&x| Ok((sa.eval(x)? - sb.eval(x)?).abs()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(DeviationProfile { kind, x: grid.to_vec(), z })
}

/// Combines the two orthogonal differences as vector components.
pub fn synthesize(absv: &DeviationProfile, absh: &DeviationProfile) -> Result<DeviationProfile> {
    if absv.x != absh.x {
        return Err(Error::Config("ABSV and ABSH must share one x grid".into()));
    }
    Ok(DeviationProfile {
        kind: DeviationKind::Squabs,
        x: absv.x.clone(),
        z: absv.z.iter().zip(&absh.z).map(|(v, h)| v.hypot(*h)).collect(),
    })
}

/// Grid positions whose deviation is within `delta_z_s` of the maximum,
/// in ascending `x`.
pub fn locate_max_deviation(squabs: &DeviationProfile, delta_z_s: f64) -> Result<Vec<f64>> {
    if squabs.z.is_empty() {
        return Err(Error::InsufficientData("empty deviation profile".into()));
    }
    if !(delta_z_s >= 0.0) {
        return Err(Error::Config(format!("delta_z_s must be >= 0, got {delta_z_s}")));
    }
    let max = squabs.z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(squabs
        .x
        .iter()
        .zip(&squabs.z)
        .filter(|(_, &z)| z >= max - delta_z_s)
        .map(|(&x, _)| x)
        .collect())
}

/// `2 · max_t |c_t − b|`.
pub fn coaxiality(centers: &[[f64; 2]], benchmark: [f64; 2]) -> Result<f64> {
    if centers.is_empty() {
        return Err(Error::InsufficientData("no cross-section centres".into()));
    }
    Ok(2.0
        * centers
            .iter()
            .map(|c| (c[0] - benchmark[0]).hypot(c[1] - benchmark[1]))
            .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionConfig {
    /// Points within this axial distance of a section position are used.
    pub half_width: f64,
    pub min_points: usize,
    /// Robust trimming multiplier and floor (mm) for the circle refit.
    pub trim_k: f64,
    pub trim_floor: f64,
    pub trim_rounds: usize,
    /// Farthest a section may move to reach sampled data (mm).
    pub max_shift: f64,
}

impl Default for SectionConfig {
    fn default() -> Self {
        SectionConfig { half_width: 0.05, min_points: 12, trim_k: 3.0, trim_floor: 0.01, trim_rounds: 5, max_shift: 1.0 }
    }
}

impl SectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0) {
            return Err(Error::Config("section half width must be > 0".into()));
        }
        if self.min_points < 3 {
            return Err(Error::Config("sections need at least 3 points".into()));
        }
        if !(self.max_shift >= 0.0) {
            return Err(Error::Config("section max_shift must be >= 0".into()));
        }
        if !(self.trim_k > 0.0 && self.trim_floor >= 0.0) {
            return Err(Error::Config("trim parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Fitted cross section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub x: f64,
    pub center: [f64; 2],
    pub radius: f64,
    pub residual: f64,
    pub points: usize,
    /// Distance of the centre from the benchmark; zero for benchmark
    /// sections themselves.
    pub distance: f64,
}

/// Blade-back points of the cross section at `x`, as `(y, z)`.
pub fn section_points(points: &[MeasurementPoint], x: f64, half_width: f64) -> Vec<[f64; 2]> {
    points
        .iter()
        .filter(|p| p.label == Label::BladeBack && (p.x - x).abs() <= half_width)
        .map(|p| [p.y, p.z])
        .collect()
}

/// Fits the cross section at `x`. When no blade-back sample lies within
/// `half_width`, the section moves to the nearest sampled `x`, at most
/// `max_shift` away.
pub fn fit_section(points: &[MeasurementPoint], x: f64, cfg: &SectionConfig) -> Result<Section> {
    let nearest = points
        .iter()
        .filter(|p| p.label == Label::BladeBack)
        .map(|p| p.x)
        .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()));
    let x = match nearest {
        Some(n) if (n - x).abs() > cfg.half_width && (n - x).abs() <= cfg.max_shift => n,
        _ => x,
    };
    let pts = section_points(points, x, cfg.half_width);
    if pts.len() < cfg.min_points {
        return Err(Error::InsufficientData(format!(
            "cross section at x = {x:.3} has {} blade-back points, need {}",
            pts.len(),
            cfg.min_points
        )));
    }
    let f = fit_circle_trimmed(&pts, cfg.trim_k, cfg.trim_floor, cfg.trim_rounds)?;
    Ok(Section { x, center: f.center, radius: f.radius, residual: f.residual, points: f.points, distance: 0.0 })
}

/// Mean centre of `count` evenly spaced shank sections.
pub fn benchmark(
    points: &[MeasurementPoint],
    shank_range: [f64; 2],
    count: usize,
    cfg: &SectionConfig,
) -> Result<([f64; 2], Vec<Section>)> {
    if !(shank_range[1] > shank_range[0]) {
        return Err(Error::Config(format!("shank range {shank_range:?} is empty")));
    }
    if count == 0 {
        return Err(Error::Config("benchmark needs at least one section".into()));
    }
    let span = shank_range[1] - shank_range[0];
    let sections = (0..count)
        .map(|k| fit_section(points, shank_range[0] + span * (k as f64 + 0.5) / count as f64, cfg))
        .collect::<Result<Vec<Section>>>()?;
    let n = sections.len() as f64;
    let c = [
        sections.iter().map(|s| s.center[0]).sum::<f64>() / n,
        sections.iter().map(|s| s.center[1]).sum::<f64>() / n,
    ];
    Ok((c, sections))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisConfig {
    pub profile: ProfileConfig,
    pub delta_z_s: f64,
    pub section: SectionConfig,
    pub shank_range: [f64; 2],
    pub shank_sections: usize,
}

impl Default for AxisConfig {
    fn default() -> Self {
        AxisConfig {
            profile: ProfileConfig::default(),
            delta_z_s: 0.01,
            section: SectionConfig::default(),
            shank_range: [5.0, 35.0],
            shank_sections: 5,
        }
    }
}

impl AxisConfig {
    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.section.validate()?;
        if !(self.delta_z_s >= 0.0) {
            return Err(Error::Config("delta_z_s must be >= 0".into()));
        }
        if !(self.shank_range[1] > self.shank_range[0]) {
            return Err(Error::Config(format!("shank range {:?} is empty", self.shank_range)));
        }
        if self.shank_sections == 0 {
            return Err(Error::Config("need at least one shank section".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AxisResult {
    pub profiles: [AxialProfile; 4],
    pub absv: DeviationProfile,
    pub absh: DeviationProfile,
    pub squabs: DeviationProfile,
    pub xsm: Vec<f64>,
    /// Grid position of the largest combined deviation.
    pub peak_x: f64,
    pub sections: Vec<Section>,
    pub benchmark_center: [f64; 2],
    pub benchmark_sections: Vec<Section>,
    pub coaxiality: f64,
    pub warnings: Vec<String>,
}

/// Runs the whole axis stage on a labelled measurement cloud.
pub fn reconstruct(points: &[MeasurementPoint], meta: &ScanMeta, cfg: &AxisConfig) -> Result<AxisResult> {
    cfg.validate()?;
    let profiles = extract_profiles(points, meta, &cfg.profile)?;
    let grid = shared_grid(&profiles.iter().collect::<Vec<_>>())?;
    let absv = difference_profiles(&profiles[0], &profiles[2], DeviationKind::Absv, &grid)?;
    let absh = difference_profiles(&profiles[1], &profiles[3], DeviationKind::Absh, &grid)?;
    let squabs = synthesize(&absv, &absh)?;
    let xsm = locate_max_deviation(&squabs, cfg.delta_z_s)?;
    let peak_x = locate_max_deviation(&squabs, 0.0)?[0];
    let (bench, bench_sections) = benchmark(points, cfg.shank_range, cfg.shank_sections, &cfg.section)?;
    let mut warnings = Vec::new();
    for p in &profiles {
        if p.window_frames != cfg.profile.window_frames {
            warnings.push(format!(
                "profile at {:.2} deg needed a widened window of ±{} frames",
                p.angle_deg, p.window_frames
            ));
        }
    }
    let mut sections = Vec::with_capacity(xsm.len());
    for &x in &xsm {
        match fit_section(points, x, &cfg.section) {
            Ok(mut s) => {
                s.distance = (s.center[0] - bench[0]).hypot(s.center[1] - bench[1]);
                sections.push(s);
            }
            Err(Error::InsufficientData(m)) | Err(Error::Degenerate(m)) => warnings.push(m),
            Err(e) => return Err(e),
        }
    }
    let centers: Vec<[f64; 2]> = sections.iter().map(|s| s.center).collect();
    let c_e = coaxiality(&centers, bench)?;
    Ok(AxisResult {
        profiles,
        absv,
        absh,
        squabs,
        xsm,
        peak_x,
        sections,
        benchmark_center: bench,
        benchmark_sections: bench_sections,
        coaxiality: c_e,
        warnings,
    })
}
