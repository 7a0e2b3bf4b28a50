use std::path::PathBuf;

use crate::axis::AxisConfig;
use crate::calibration::CalibrationConfig;
use crate::error::{Error, Result};
use crate::io::{parse_key_values, Entry};
use crate::scan::ScanMeta;
use crate::segmentation::{GridLayout, SegmentationConfig, SorConfig};

/// Every tunable of a run, loaded from `key=value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Replaces the sidecar's sensor-to-axis distance.
    pub axis_distance: Option<f64>,
    /// Calibration result JSON whose `axis_distance` is used.
    pub calibration_file: Option<PathBuf>,
    pub gamma: Option<f64>,
    pub nominal_radius: f64,
    /// Depth band kept by the pass-through filter; defaults to one
    /// millimetre either side of the nominal surface.
    pub depth_band: Option<[f64; 2]>,
    pub flute_count: usize,
    /// Square block side (mm); defaults to one blade back plus one lip.
    pub block_size: Option<f64>,
    pub patch_size: f64,
    /// Fixed counts replace the size-based layout when both are set.
    pub block_counts: Option<[usize; 2]>,
    pub patch_counts: Option<[usize; 2]>,
    pub bin_width: f64,
    pub em_tol: f64,
    pub em_max_iter: usize,
    /// Defaults to a tenth of the bin width.
    pub sigma_floor: Option<f64>,
    pub block_trend: bool,
    pub min_separation: f64,
    pub min_weight: f64,
    pub min_bimodality: f64,
    pub sor: bool,
    pub sor_k: usize,
    pub sor_std_multiplier: f64,
    pub axis: AxisConfig,
    pub calibration: CalibrationConfig,
    pub delta_z: f64,
    pub delta_c: f64,
    pub part_length: f64,
    pub part_diameter: f64,
    pub max_ratio: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let seg = SegmentationConfig::default();
        PipelineConfig {
            axis_distance: None,
            calibration_file: None,
            gamma: None,
            nominal_radius: 5.0,
            depth_band: None,
            flute_count: 2,
            block_size: None,
            patch_size: 0.25,
            block_counts: None,
            patch_counts: None,
            bin_width: seg.bin_width,
            em_tol: seg.em.tol,
            em_max_iter: seg.em.max_iter,
            sigma_floor: None,
            block_trend: seg.block_trend,
            min_separation: seg.min_separation,
            min_weight: seg.min_weight,
            min_bimodality: seg.min_bimodality,
            sor: true,
            sor_k: SorConfig::default().k_neighbors,
            sor_std_multiplier: SorConfig::default().std_multiplier,
            axis: AxisConfig::default(),
            calibration: CalibrationConfig::default(),
            delta_z: 0.003,
            delta_c: 0.005,
            part_length: 100.0,
            part_diameter: 10.0,
            max_ratio: crate::uncertainty::MAX_RATIO,
            noise_sigma: 0.003,
            seed: 0,
        }
    }
}

/// Keys accepted by [`PipelineConfig::set`].
pub const KEYS: &[&str] = &[
    "axis_distance_D",
    "calibration_file",
    "gamma",
    "nominal_radius",
    "depth_band",
    "flute_count",
    "block_size",
    "patch_size",
    "block_counts",
    "patch_counts",
    "bin_width",
    "em_tol",
    "em_max_iter",
    "sigma_floor",
    "block_trend",
    "min_separation",
    "min_weight",
    "min_bimodality",
    "sor",
    "sor_k",
    "sor_std_multiplier",
    "theta_deg",
    "window_frames",
    "profile_bin_width",
    "delta_z_s",
    "section_half_width",
    "shank_range",
    "shank_sections",
    "delta_z_threshold",
    "spacing_tolerance",
    "jump_threshold",
    "ladder_radius",
    "delta_z",
    "delta_c",
    "part_length",
    "part_diameter",
    "max_ratio",
    "noise_sigma",
    "seed",
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn pair<T: std::str::FromStr + Copy>(key: &str, v: &str) -> Result<[T; 2]> {
    let parts: Vec<&str> = v.split([',', 'x']).map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("{key}: expected two values like \"a,b\", got {v:?}")));
    }
    Ok([num(key, parts[0])?, num(key, parts[1])?])
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl PipelineConfig {
    /// Applies one setting. `value` is parsed as the key's type.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "axis_distance_D" => self.axis_distance = Some(num(key, v)?),
            "calibration_file" => self.calibration_file = Some(PathBuf::from(v.trim())),
            "gamma" => self.gamma = Some(num(key, v)?),
            "nominal_radius" => self.nominal_radius = num(key, v)?,
            "depth_band" => self.depth_band = Some(pair(key, v)?),
            "flute_count" => self.flute_count = num(key, v)?,
            "block_size" => self.block_size = Some(num(key, v)?),
            "patch_size" => self.patch_size = num(key, v)?,
            "block_counts" => self.block_counts = Some(pair(key, v)?),
            "patch_counts" => self.patch_counts = Some(pair(key, v)?),
            "bin_width" => self.bin_width = num(key, v)?,
            "em_tol" => self.em_tol = num(key, v)?,
            "em_max_iter" => self.em_max_iter = num(key, v)?,
            "sigma_floor" => self.sigma_floor = Some(num(key, v)?),
            "block_trend" => self.block_trend = flag(key, v)?,
            "min_separation" => self.min_separation = num(key, v)?,
            "min_weight" => self.min_weight = num(key, v)?,
            "min_bimodality" => self.min_bimodality = num(key, v)?,
            "sor" => self.sor = flag(key, v)?,
            "sor_k" => self.sor_k = num(key, v)?,
            "sor_std_multiplier" => self.sor_std_multiplier = num(key, v)?,
            "theta_deg" => self.axis.profile.theta_deg = num(key, v)?,
            "window_frames" => self.axis.profile.window_frames = num(key, v)?,
            "profile_bin_width" => self.axis.profile.bin_width = num(key, v)?,
            "delta_z_s" => self.axis.delta_z_s = num(key, v)?,
            "section_half_width" => self.axis.section.half_width = num(key, v)?,
            "shank_range" => self.axis.shank_range = pair(key, v)?,
            "shank_sections" => self.axis.shank_sections = num(key, v)?,
            "delta_z_threshold" => self.calibration.delta_z_threshold = num(key, v)?,
            "spacing_tolerance" => self.calibration.spacing_tolerance = num(key, v)?,
            "jump_threshold" => self.calibration.jump_threshold = num(key, v)?,
            "ladder_radius" => self.calibration.ladder_radius = num(key, v)?,
            "delta_z" => self.delta_z = num(key, v)?,
            "delta_c" => self.delta_c = num(key, v)?,
            "part_length" => self.part_length = num(key, v)?,
            "part_diameter" => self.part_diameter = num(key, v)?,
            "max_ratio" => self.max_ratio = num(key, v)?,
            "noise_sigma" => self.noise_sigma = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            other => return Err(Error::Config(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    /// Applies file entries, reporting the offending line on failure.
    pub fn apply_entries(&mut self, entries: &[Entry]) -> Result<()> {
        for e in entries {
            self.set(&e.key, &e.value).map_err(|err| Error::Parse { line: e.line, message: err.to_string() })?;
        }
        Ok(())
    }

    /// Defaults overridden by `text`, validated.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = PipelineConfig::default();
        c.apply_entries(&parse_key_values(text)?)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("nominal_radius", self.nominal_radius),
            ("patch_size", self.patch_size),
            ("part_length", self.part_length),
            ("part_diameter", self.part_diameter),
            ("max_ratio", self.max_ratio),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("delta_z", self.delta_z), ("delta_c", self.delta_c), ("noise_sigma", self.noise_sigma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if let Some(d) = self.axis_distance {
            if !(d > 0.0) {
                return Err(Error::Config(format!("axis_distance_D must be positive, got {d}")));
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return Err(Error::Config(format!("gamma must be positive, got {g}")));
            }
        }
        if let Some(b) = self.block_size {
            if !(b > 0.0) {
                return Err(Error::Config(format!("block_size must be positive, got {b}")));
            }
        }
        if let Some([lo, hi]) = self.depth_band {
            if !(lo < hi) {
                return Err(Error::Config(format!("depth_band needs min < max, got [{lo}, {hi}]")));
            }
        }
        if self.flute_count == 0 {
            return Err(Error::Config("flute_count must be at least 1".into()));
        }
        if self.block_counts.is_some() != self.patch_counts.is_some() {
            return Err(Error::Config("block_counts and patch_counts must be given together".into()));
        }
        self.segmentation(&ScanMeta::new(4, 1, 1.0, 1.0)).validate()?;
        self.axis.validate()?;
        self.calibration.validate()?;
        Ok(())
    }

    /// Segmentation settings for a scan with `meta`.
    pub fn segmentation(&self, meta: &ScanMeta) -> SegmentationConfig {
        let layout = match (self.block_counts, self.patch_counts) {
            (Some(blocks), Some(patches)) => GridLayout::Counts { blocks, patches },
            _ => match self.block_size {
                Some(b) => GridLayout::Sizes { block: [b, b], patch: [self.patch_size; 2] },
                None => GridLayout::for_part(meta, self.flute_count, [self.patch_size; 2]),
            },
        };
        let mut seg = SegmentationConfig {
            layout,
            bin_width: self.bin_width,
            block_trend: self.block_trend,
            min_separation: self.min_separation,
            min_weight: self.min_weight,
            min_bimodality: self.min_bimodality,
            sor: self.sor.then_some(SorConfig { k_neighbors: self.sor_k, std_multiplier: self.sor_std_multiplier }),
            ..SegmentationConfig::default()
        };
        seg.em.tol = self.em_tol;
        seg.em.max_iter = self.em_max_iter;
        seg.em.sigma_floor = self.sigma_floor.unwrap_or(self.bin_width / 10.0);
        seg
    }

    /// Pass-through band for a scan at `axis_distance`.
    pub fn band(&self, axis_distance: f64) -> [f64; 2] {
        self.depth_band.unwrap_or([axis_distance - self.nominal_radius - 1.0, axis_distance - self.nominal_radius + 1.0])
    }
}
