use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan::{Label, ScanMeta, ScanSet, SensorFrame, SensorPoint};

/// Single smooth bow of the working part.
///
/// The axis offset is zero at the shank end, peaks at `apex_offset` at
/// `apex_x` and follows a parabola in between, lying in the plane at angle
/// `plane_deg` (same angle convention as the turntable angle).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bend {
    pub plane_deg: f64,
    pub apex_x: f64,
    pub apex_offset: f64,
}

/// Parametric twist drill.
///
/// `x` runs from the shank end (`x = 0`) to the tip. Each flute period of
/// the working cross section is split into blade back (full radius), blade
/// lip (recessed by `lip_recess`) and groove (recessed by `groove_depth`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrillSpec {
    pub shank_length: f64,
    pub shank_diameter: f64,
    pub working_length: f64,
    pub working_diameter: f64,
    pub flute_count: usize,
    /// Axial advance per flute revolution; `0` gives straight flutes.
    pub helix_pitch: f64,
    pub back_width_deg: f64,
    pub lip_width_deg: f64,
    pub lip_recess: f64,
    pub groove_depth: f64,
    /// Angular position of the first blade back at the shank end.
    pub flute_phase_deg: f64,
    pub bend: Bend,
    /// Offset of the shank axis from the turntable axis, as `(y, z)`.
    pub mount_eccentricity: [f64; 2],
}

impl Default for DrillSpec {
    fn default() -> Self {
        Self {
            shank_length: 40.0,
            shank_diameter: 10.0,
            working_length: 60.0,
            working_diameter: 10.0,
            flute_count: 2,
            helix_pitch: 54.0,
            back_width_deg: 60.0,
            lip_width_deg: 30.0,
            lip_recess: 0.3,
            groove_depth: 2.0,
            flute_phase_deg: 0.0,
            bend: Bend {
                plane_deg: 30.0,
                apex_x: 70.0,
                apex_offset: 0.25,
            },
            mount_eccentricity: [0.0, 0.0],
        }
    }
}

/// Surface region hit by a sensor ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Shank,
    Back,
    Lip,
    Groove,
}

impl Region {
    pub fn label(self) -> Label {
        match self {
            Region::Shank | Region::Back => Label::BladeBack,
            Region::Lip | Region::Groove => Label::Background,
        }
    }
}

impl DrillSpec {
    pub fn length(&self) -> f64 {
        self.shank_length + self.working_length
    }

    pub fn radius(&self) -> f64 {
        self.working_diameter / 2.0
    }

    /// Bow with `apex_offset = coaxiality / 2`. The parabola is symmetric
    /// about the apex, so for an apex short of the working part's midpoint
    /// the tip swings further out than the apex and [`true_coaxiality`]
    /// exceeds `coaxiality`.
    ///
    /// [`true_coaxiality`]: DrillSpec::true_coaxiality
    pub fn with_bend(mut self, coaxiality: f64, plane_deg: f64, apex_x: f64) -> Self {
        self.bend = Bend {
            plane_deg,
            apex_x,
            apex_offset: coaxiality / 2.0,
        };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("shank_length", self.shank_length),
            ("shank_diameter", self.shank_diameter),
            ("working_length", self.working_length),
            ("working_diameter", self.working_diameter),
            ("back_width_deg", self.back_width_deg),
            ("lip_width_deg", self.lip_width_deg),
            ("lip_recess", self.lip_recess),
            ("groove_depth", self.groove_depth),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.flute_count == 0 {
            return Err(Error::Config("flute_count must be at least 1".into()));
        }
        if self.helix_pitch < 0.0 {
            return Err(Error::Config("helix_pitch must be non-negative".into()));
        }
        let period = 360.0 / self.flute_count as f64;
        if self.back_width_deg + self.lip_width_deg >= period {
            return Err(Error::Config(format!(
                "blade back + lip ({} deg) must leave room for a groove in a {period} deg flute period",
                self.back_width_deg + self.lip_width_deg
            )));
        }
        if self.groove_depth <= self.lip_recess {
            return Err(Error::Config("groove must be deeper than the lip recess".into()));
        }
        if self.groove_depth >= self.radius() {
            return Err(Error::Config("groove_depth must be smaller than the radius".into()));
        }
        let b = &self.bend;
        if b.apex_offset < 0.0 {
            return Err(Error::Config("bend apex_offset must be non-negative".into()));
        }
        if b.apex_offset > 0.0 && !(b.apex_x > self.shank_length && b.apex_x <= self.length()) {
            return Err(Error::Config(format!(
                "bend apex_x {} must lie in the working part ({}, {}]",
                b.apex_x,
                self.shank_length,
                self.length()
            )));
        }
        Ok(())
    }

    /// Bow shape factor, zero at the shank end and one at the apex.
    fn bow(&self, x: f64) -> f64 {
        let b = &self.bend;
        if x <= self.shank_length || b.apex_offset == 0.0 {
            return 0.0;
        }
        let u = (x - b.apex_x) / (b.apex_x - self.shank_length);
        1.0 - u * u
    }

    /// Center of the cross section at `x`, as `(y, z)` in the turntable frame.
    pub fn axis_center(&self, x: f64) -> [f64; 2] {
        let off = self.bend.apex_offset * self.bow(x);
        let (s, c) = self.bend.plane_deg.to_radians().sin_cos();
        [
            self.mount_eccentricity[0] + off * s,
            self.mount_eccentricity[1] + off * c,
        ]
    }

    /// Coaxiality of the working part against the shank axis: twice the
    /// largest center offset.
    pub fn true_coaxiality(&self) -> f64 {
        let x0 = self.shank_length;
        let n = 20_000;
        let mut best = (self.bend.apex_offset * self.bow(self.bend.apex_x.min(self.length()))).abs();
        for k in 0..=n {
            let x = x0 + self.working_length * k as f64 / n as f64;
            best = best.max((self.bend.apex_offset * self.bow(x)).abs());
        }
        2.0 * best
    }

    fn helix_phase(&self, x: f64) -> f64 {
        if self.helix_pitch > 0.0 {
            TAU * (x - self.shank_length) / self.helix_pitch
        } else {
            0.0
        }
    }

    /// Region at axial position `x` and polar angle `psi` about the local
    /// section center.
    pub fn region_at(&self, x: f64, psi: f64) -> Region {
        if x <= self.shank_length {
            return Region::Shank;
        }
        let period = TAU / self.flute_count as f64;
        let s = (psi - self.flute_phase_deg.to_radians() - self.helix_phase(x)).rem_euclid(period);
        let back = self.back_width_deg.to_radians();
        let lip = self.lip_width_deg.to_radians();
        if s < back {
            Region::Back
        } else if s < back + lip {
            Region::Lip
        } else {
            Region::Groove
        }
    }

    pub fn region_radius(&self, region: Region) -> f64 {
        match region {
            Region::Shank => self.shank_diameter / 2.0,
            Region::Back => self.radius(),
            Region::Lip => self.radius() - self.lip_recess,
            Region::Groove => self.radius() - self.groove_depth,
        }
    }

    fn regions_at(&self, x: f64) -> &'static [Region] {
        if x <= self.shank_length {
            &[Region::Shank]
        } else {
            &[Region::Back, Region::Lip, Region::Groove]
        }
    }

    /// Outermost surface point along the ray from the turntable axis in
    /// direction `dir`. Returns the distance from the axis and the region.
    fn ray_hit(&self, x: f64, dir: [f64; 2]) -> Option<(f64, Region)> {
        let c = self.axis_center(x);
        let cu = c[0] * dir[0] + c[1] * dir[1];
        let cc = c[0] * c[0] + c[1] * c[1];
        let mut best: Option<(f64, Region)> = None;
        for &region in self.regions_at(x) {
            let rho = self.region_radius(region);
            let disc = cu * cu - cc + rho * rho;
            if disc < 0.0 {
                continue;
            }
            let t = cu + disc.sqrt();
            if t <= 0.0 {
                continue;
            }
            let q = [t * dir[0] - c[0], t * dir[1] - c[1]];
            let psi = q[0].atan2(q[1]);
            if self.region_at(x, psi) == region && best.map_or(true, |(bt, _)| t > bt) {
                best = Some((t, region));
            }
        }
        best
    }

    /// True if the segment from surface point `p` towards the camera
    /// direction `view` re-enters the part.
    fn shadowed(&self, x: f64, p: [f64; 2], view: [f64; 2]) -> bool {
        let c = self.axis_center(x);
        let d = [p[0] - c[0], p[1] - c[1]];
        let b = view[0] * d[0] + view[1] * d[1];
        let dd = d[0] * d[0] + d[1] * d[1];
        for &region in self.regions_at(x) {
            let rho = self.region_radius(region);
            let disc = b * b - (dd - rho * rho);
            if disc < 0.0 {
                continue;
            }
            let sq = disc.sqrt();
            for s in [-b - sq, -b + sq] {
                if s > 1e-7 {
                    let q = [d[0] + s * view[0], d[1] + s * view[1]];
                    if self.region_at(x, q[0].atan2(q[1])) == region {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Optical visibility constraints of the triangulation sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionModel {
    /// Largest accepted angle between the laser ray and the surface normal.
    pub incidence_limit_deg: f64,
    /// Angle between the laser ray and the camera's line of sight.
    pub triangulation_deg: f64,
    /// Depth of field `[near, far]` in sensor `z`.
    pub depth_range: [f64; 2],
    /// Sampled width `[min, max]` along `x`.
    pub fov_x: [f64; 2],
}

impl Default for OcclusionModel {
    fn default() -> Self {
        Self {
            incidence_limit_deg: 60.0,
            triangulation_deg: 30.0,
            depth_range: [106.5, 200.0],
            fov_x: [-2.0, 102.0],
        }
    }
}

impl OcclusionModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.incidence_limit_deg > 0.0 && self.incidence_limit_deg <= 90.0) {
            return Err(Error::Config("incidence_limit_deg must be in (0, 90]".into()));
        }
        if !(self.triangulation_deg > 0.0 && self.triangulation_deg < 90.0) {
            return Err(Error::Config("triangulation_deg must be in (0, 90)".into()));
        }
        if !(self.depth_range[0] > 0.0 && self.depth_range[0] < self.depth_range[1]) {
            return Err(Error::Config("depth_range must satisfy 0 < near < far".into()));
        }
        if !(self.fov_x[0] < self.fov_x[1]) {
            return Err(Error::Config("fov_x must satisfy min < max".into()));
        }
        Ok(())
    }

    /// Sample positions along `x` for a profile of `count` points.
    pub fn sample_x(&self, count: usize) -> Vec<f64> {
        let [lo, hi] = self.fov_x;
        if count == 1 {
            return vec![0.5 * (lo + hi)];
        }
        let step = (hi - lo) / (count - 1) as f64;
        (0..count).map(|j| lo + step * j as f64).collect()
    }
}

/// Simulator bookkeeping for one drill scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Per-sample labels in scan order.
    pub labels: Vec<Label>,
    pub true_coaxiality: f64,
    pub apex_x: f64,
    pub phi_deg: f64,
    /// Shank axis, `(y, z)`.
    pub benchmark: [f64; 2],
    /// Axis curve sampled at 1 mm spacing as `(x, y, z)`.
    pub axis: Vec<[f64; 3]>,
}

/// Per-frame RNG so serial and parallel generation agree.
pub(crate) fn frame_rng(seed: u64, frame: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame as u64);
    rng
}

/// Simulates one revolution of a line-laser scan of `spec`.
pub fn scan_drill(
    spec: &DrillSpec,
    meta: &ScanMeta,
    occlusion: &OcclusionModel,
    noise_sigma: f64,
    seed: u64,
) -> Result<(ScanSet, GroundTruth)> {
    spec.validate()?;
    meta.validate()?;
    occlusion.validate()?;
    if !(noise_sigma >= 0.0) {
        return Err(Error::Config("noise_sigma must be non-negative".into()));
    }
    let reach = spec.radius().max(spec.shank_diameter / 2.0)
        + spec.bend.apex_offset
        + spec.mount_eccentricity[0].hypot(spec.mount_eccentricity[1]);
    if meta.axis_distance <= reach {
        return Err(Error::Config(format!(
            "axis_distance_D {} must exceed the part's reach {reach}",
            meta.axis_distance
        )));
    }
    if occlusion.fov_x[0] > 0.0 || occlusion.fov_x[1] < spec.length() {
        return Err(Error::Simulation(format!(
            "frame 0: part spans x in [0, {}] but the sensor field is [{}, {}]",
            spec.length(),
            occlusion.fov_x[0],
            occlusion.fov_x[1]
        )));
    }
    let noise = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;
    let xs = occlusion.sample_x(meta.points_per_frame);
    let cos_limit = occlusion.incidence_limit_deg.to_radians().cos();
    let tri = occlusion.triangulation_deg.to_radians();

    let mut frames = Vec::with_capacity(meta.frame_count);
    let mut labels = Vec::new();
    for i in 0..meta.frame_count {
        let theta = meta.frame_angle(i);
        let dir = [theta.sin(), theta.cos()];
        let view = [(theta + tri).sin(), (theta + tri).cos()];
        let mut rng = frame_rng(seed, i);
        let mut points = Vec::with_capacity(xs.len());
        for &x in &xs {
            if x < 0.0 || x > spec.length() {
                continue;
            }
            let Some((t, region)) = spec.ray_hit(x, dir) else {
                continue;
            };
            let c = spec.axis_center(x);
            let p = [t * dir[0], t * dir[1]];
            let n = [p[0] - c[0], p[1] - c[1]];
            let cos_inc = (n[0] * dir[0] + n[1] * dir[1]) / n[0].hypot(n[1]);
            if cos_inc < cos_limit || spec.shadowed(x, p, view) {
                continue;
            }
            let depth = meta.axis_distance - t;
            if depth < occlusion.depth_range[0] || depth > occlusion.depth_range[1] {
                continue;
            }
            let z = if noise_sigma > 0.0 {
                depth + noise.sample(&mut rng)
            } else {
                depth
            };
            points.push(SensorPoint::new(x, z));
            labels.push(region.label());
        }
        if points.is_empty() {
            return Err(Error::Simulation(format!("frame {i}: part left the sensor field")));
        }
        frames.push(SensorFrame::new(i, points));
    }

    let axis = (0..=spec.length().floor() as usize)
        .map(|k| {
            let x = k as f64;
            let c = spec.axis_center(x);
            [x, c[0], c[1]]
        })
        .collect();
    let truth = GroundTruth {
        labels,
        true_coaxiality: spec.true_coaxiality(),
        apex_x: spec.bend.apex_x,
        phi_deg: spec.bend.plane_deg,
        benchmark: spec.mount_eccentricity,
        axis,
    };
    Ok((ScanSet::new(*meta, frames), truth))
}

/// Replaces a random `fraction` of samples with gross depth outliers and
/// relabels them. Returns the scan-order indices that were changed.
pub fn inject_outliers(
    scan: &mut ScanSet,
    truth: &mut GroundTruth,
    fraction: f64,
    magnitude: [f64; 2],
    seed: u64,
) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed0);
    let mut changed = Vec::new();
    let mut idx = 0;
    for frame in &mut scan.frames {
        for p in &mut frame.points {
            if rng.gen::<f64>() < fraction {
                let mag = rng.gen_range(magnitude[0]..magnitude[1]);
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                p.z += sign * mag;
                truth.labels[idx] = Label::Outlier;
                changed.push(idx);
            }
            idx += 1;
        }
    }
    changed
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_meta() -> ScanMeta {
        ScanMeta::new(360, 400, 150.0, 5.0)
    }

    #[test]
    fn straight_noiseless_blade_back_sits_at_radius() {
        let spec = DrillSpec::default().with_bend(0.0, 0.0, 70.0);
        let (scan, truth) = scan_drill(&spec, &small_meta(), &OcclusionModel::default(), 0.0, 1).unwrap();
        let mut n = 0;
        for ((_, p), label) in scan.samples().zip(&truth.labels) {
            if *label == Label::BladeBack {
                assert!((p.z - 145.0).abs() < 1e-9, "{}", p.z);
                n += 1;
            }
        }
        assert!(n > 1000);
        assert_eq!(truth.true_coaxiality, 0.0);
    }

    #[test]
    fn labels_follow_regions() {
        let spec = DrillSpec::default();
        let meta = small_meta();
        let (scan, truth) = scan_drill(&spec, &meta, &OcclusionModel::default(), 0.0, 1).unwrap();
        // Recompute each label from the pre-noise position.
        for (((i, p), label), k) in scan.samples().zip(&truth.labels).zip(0..) {
            let theta = meta.frame_angle(i);
            let r = meta.axis_distance - p.z;
            let c = spec.axis_center(p.x);
            let q = [r * theta.sin() - c[0], r * theta.cos() - c[1]];
            let region = spec.region_at(p.x, q[0].atan2(q[1]));
            assert_eq!(region.label(), *label, "sample {k}");
            let rr = q[0].hypot(q[1]);
            assert!((rr - spec.region_radius(region)).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = DrillSpec::default();
        let a = scan_drill(&spec, &small_meta(), &OcclusionModel::default(), 0.003, 7).unwrap();
        let b = scan_drill(&spec, &small_meta(), &OcclusionModel::default(), 0.003, 7).unwrap();
        let c = scan_drill(&spec, &small_meta(), &OcclusionModel::default(), 0.003, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn tighter_incidence_never_adds_points() {
        let spec = DrillSpec::default().with_bend(0.6, 10.0, 80.0);
        let loose = OcclusionModel { incidence_limit_deg: 80.0, ..Default::default() };
        let tight = OcclusionModel { incidence_limit_deg: 1.0, ..Default::default() };
        let (a, _) = scan_drill(&spec, &small_meta(), &loose, 0.0, 1).unwrap();
        let (b, _) = scan_drill(&spec, &small_meta(), &tight, 0.0, 1).unwrap();
        assert!(b.point_count() <= a.point_count());
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            for p in &fb.points {
                assert!(fa.points.iter().any(|q| q.x == p.x));
            }
        }
    }

    #[test]
    fn true_coaxiality_is_twice_apex_offset() {
        let spec = DrillSpec::default().with_bend(0.5, 45.0, 70.0);
        assert!((spec.true_coaxiality() - 0.5).abs() < 1e-12);
        let c = spec.axis_center(70.0);
        assert!((c[0].hypot(c[1]) - 0.25).abs() < 1e-12);
        assert_eq!(spec.axis_center(40.0), [0.0, 0.0]);
    }

    #[test]
    fn rejects_sensor_too_close() {
        let meta = ScanMeta::new(360, 100, 5.0, 5.0);
        assert!(scan_drill(&DrillSpec::default(), &meta, &OcclusionModel::default(), 0.0, 0).is_err());
    }

    #[test]
    fn part_outside_field_is_reported() {
        let occ = OcclusionModel { fov_x: [10.0, 90.0], ..Default::default() };
        let err = scan_drill(&DrillSpec::default(), &small_meta(), &occ, 0.0, 0).unwrap_err();
        assert!(err.to_string().contains("frame 0"), "{err}");
    }
}
