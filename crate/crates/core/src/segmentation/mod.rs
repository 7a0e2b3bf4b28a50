//! Blade-back extraction from the unrolled cloud.
//!
//! The cloud is cut into blocks and patches. Each non-empty patch is
//! summarised by the mode of its depth histogram, and a two-component
//! mixture is fitted to the modes of every block. Patches take the label
//! of the component that explains their mode best; the nearer (smaller
//! depth) component is the blade back. A statistical outlier filter then
//! strips isolated points from the blade back.
//!
//! Two additions make this usable on real parts:
//!
//! * an optional planar depth trend per block, re-estimated between
//!   mixture fits, so that axis runout inside a block does not masquerade
//!   as a second surface;
//! * blocks whose fit does not show two separated surfaces are labelled
//!   against a per-row reference of the blade-back depth, built as a first
//!   harmonic in the rotation angle from the blocks that did resolve.

mod gmm;
mod grid;
mod sor;

pub use gmm::{em_fit, init_gmm, normal_pdf, Component, EmConfig, EmFit, GmmModel};
pub use grid::{build_grid, BlockGrid};
pub use sor::{sor_filter, SorConfig, SorOutcome};

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scan::{Label, ScanMeta, UnrolledCloud};

/// Depth mode of a patch: centre of the fullest histogram bin, with bins
/// centred on multiples of `bin_width`. Ties go to the lowest bin.
pub fn patch_mode(z: &[f64], bin_width: f64) -> Result<f64> {
    if !(bin_width > 0.0) {
        return Err(Error::Config(format!("bin width must be > 0, got {bin_width}")));
    }
    if z.is_empty() {
        return Err(Error::InsufficientData("empty patch has no mode".into()));
    }
    let mut bins: Vec<i64> = z.iter().map(|v| (v / bin_width + 0.5).floor() as i64).collect();
    bins.sort_unstable();
    let (mut best, mut best_n) = (bins[0], 0usize);
    let mut i = 0;
    while i < bins.len() {
        let mut j = i;
        while j < bins.len() && bins[j] == bins[i] {
            j += 1;
        }
        if j - i > best_n {
            best = bins[i];
            best_n = j - i;
        }
        i = j;
    }
    Ok(best as f64 * bin_width)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PatchFeature {
    pub patch: usize,
    pub mode: f64,
    pub count: usize,
    /// Patch centre in the unrolled `(x, y)` plane.
    pub center: [f64; 2],
}

/// Modes of every non-empty patch, in patch order.
pub fn patch_features(cloud: &UnrolledCloud, grid: &BlockGrid, bin_width: f64) -> Result<Vec<PatchFeature>> {
    let cells = grid.cells();
    let step = [grid.extent[0] / cells[0] as f64, grid.extent[1] / cells[1] as f64];
    let mut out = Vec::new();
    let mut buf = Vec::new();
    for id in 0..grid.patch_count() {
        let members = grid.members(id);
        if members.is_empty() {
            continue;
        }
        buf.clear();
        buf.extend(members.iter().map(|&m| cloud.points[m as usize].z));
        let (gx, gy) = grid.patch_cell(id);
        out.push(PatchFeature {
            patch: id,
            mode: patch_mode(&buf, bin_width)?,
            count: members.len(),
            center: [
                grid.origin[0] + (gx as f64 + 0.5) * step[0],
                grid.origin[1] + (gy as f64 + 0.5) * step[1],
            ],
        });
    }
    Ok(out)
}

/// Label from a posterior row: the most probable component, with the
/// nearer surface winning ties.
pub fn classify(model: &GmmModel, responsibility: &[f64]) -> Label {
    let near = model.nearest_component();
    let mut best = near;
    for (k, &r) in responsibility.iter().enumerate() {
        if r > responsibility[best] {
            best = k;
        }
    }
    if best == near {
        Label::BladeBack
    } else {
        Label::Background
    }
}

/// How the unrolled cloud is cut up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridLayout {
    /// Block and patch counts along `(x, y)`.
    Counts { blocks: [usize; 2], patches: [usize; 2] },
    /// Target block and patch sizes in mm; counts are rounded to fit the
    /// cloud extent.
    Sizes { block: [f64; 2], patch: [f64; 2] },
}

impl GridLayout {
    /// Blocks one blade back plus one blade lip wide: a quarter turn for a
    /// two-flute drill, square in `(x, y)`.
    pub fn for_part(meta: &ScanMeta, flute_count: usize, patch: [f64; 2]) -> GridLayout {
        let w = std::f64::consts::TAU * meta.gamma / (2 * flute_count.max(1)) as f64;
        GridLayout::Sizes { block: [w, w], patch }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            GridLayout::Counts { blocks, patches } => {
                if blocks.iter().chain(&patches).any(|&c| c == 0) {
                    return Err(Error::Config("block and patch counts must be at least 1".into()));
                }
            }
            GridLayout::Sizes { block, patch } => {
                if block.iter().chain(&patch).any(|&s| !(s > 0.0 && s.is_finite())) {
                    return Err(Error::Config("block and patch sizes must be positive".into()));
                }
            }
        }
        Ok(())
    }

    fn counts(&self, extent: [f64; 2]) -> ([usize; 2], [usize; 2]) {
        match *self {
            GridLayout::Counts { blocks, patches } => (blocks, patches),
            GridLayout::Sizes { block, patch } => {
                let fit = |len: f64, size: f64| ((len / size).round() as usize).max(1);
                let blocks = [fit(extent[0], block[0]), fit(extent[1], block[1])];
                let patches = [
                    fit(extent[0] / blocks[0] as f64, patch[0]),
                    fit(extent[1] / blocks[1] as f64, patch[1]),
                ];
                (blocks, patches)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationConfig {
    pub layout: GridLayout,
    pub bin_width: f64,
    pub em: EmConfig,
    /// Fit a planar depth trend inside each block.
    pub block_trend: bool,
    /// Smallest component separation (mm) accepted as two surfaces.
    pub min_separation: f64,
    /// Smallest component weight accepted as a real surface.
    pub min_weight: f64,
    /// Smallest Ashman bimodality `D = √2·|Δμ| / √(σ₁² + σ₂²)` accepted as
    /// two surfaces.
    pub min_bimodality: f64,
    pub sor: Option<SorConfig>,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        let bin_width = 0.039;
        SegmentationConfig {
            layout: GridLayout::Sizes { block: [7.853_981_633_974_483; 2], patch: [0.25, 0.25] },
            bin_width,
            em: EmConfig { tol: 1e-8, max_iter: 200, sigma_floor: bin_width / 10.0 },
            block_trend: true,
            min_separation: 0.1,
            min_weight: 0.05,
            min_bimodality: 4.0,
            sor: Some(SorConfig::default()),
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        if !(self.bin_width > 0.0) {
            return Err(Error::Config(format!("bin width must be > 0, got {}", self.bin_width)));
        }
        self.em.validate()?;
        if !(self.min_separation >= 0.0) {
            return Err(Error::Config("min_separation must be >= 0".into()));
        }
        if !(0.0..0.5).contains(&self.min_weight) {
            return Err(Error::Config("min_weight must lie in [0, 0.5)".into()));
        }
        if !(self.min_bimodality >= 0.0) {
            return Err(Error::Config("min_bimodality must be >= 0".into()));
        }
        if let Some(s) = &self.sor {
            s.validate()?;
        }
        Ok(())
    }
}

/// Mixture fit of one block.
#[derive(Debug, Clone, Serialize)]
pub struct BlockFit {
    pub block: usize,
    pub features: usize,
    pub model: Option<GmmModel>,
    pub iterations: usize,
    pub loglik: f64,
    pub converged: bool,
    pub sigma_clamped: bool,
    /// Depth slope along `x` and `y` removed before the last fit.
    pub slope: [f64; 2],
    /// Two separated surfaces were found.
    pub resolved: bool,
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    /// One label per cloud point.
    pub labels: Vec<Label>,
    /// One label per patch; `None` for empty patches.
    pub patch_labels: Vec<Option<Label>>,
    pub grid: BlockGrid,
    pub blocks: Vec<BlockFit>,
    /// Every fitted block converged.
    pub converged: bool,
    /// Largest EM iteration count over blocks.
    pub iterations: usize,
    /// Sum of the final block log-likelihoods.
    pub loglik: f64,
    pub sor_removed: usize,
    pub warnings: Vec<String>,
}

impl SegmentationResult {
    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

fn plane_slope(feats: &[&PatchFeature], target: &[f64]) -> Option<[f64; 2]> {
    let n = feats.len() as f64;
    let (mut mx, mut my, mut mz) = (0.0, 0.0, 0.0);
    for (f, t) in feats.iter().zip(target) {
        mx += f.center[0];
        my += f.center[1];
        mz += t;
    }
    mx /= n;
    my /= n;
    mz /= n;
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (f, t) in feats.iter().zip(target) {
        let (dx, dy, dz) = (f.center[0] - mx, f.center[1] - my, t - mz);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxz += dx * dz;
        syz += dy * dz;
    }
    let det = sxx * syy - sxy * sxy;
    if !(det > 1e-12 * (sxx * syy).max(f64::MIN_POSITIVE)) || sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some([(syy * sxz - sxy * syz) / det, (sxx * syz - sxy * sxz) / det])
}

const TREND_ROUNDS: usize = 4;

fn fit_block(block: usize, feats: &[&PatchFeature], cfg: &SegmentationConfig) -> Result<(BlockFit, Vec<Label>)> {
    let unresolved = |slope| BlockFit {
        block,
        features: feats.len(),
        model: None,
        iterations: 0,
        loglik: f64::NAN,
        converged: true,
        sigma_clamped: false,
        slope,
        resolved: false,
    };
    if feats.len() < 2 {
        return Ok((unresolved([0.0; 2]), vec![Label::Unlabeled; feats.len()]));
    }
    let mut slope = [0.0; 2];
    let mut labels: Vec<Label> = Vec::new();
    let mut last: Option<EmFit> = None;
    let rounds = if cfg.block_trend { TREND_ROUNDS } else { 1 };
    for _ in 0..rounds {
        let data: Vec<f64> = feats
            .iter()
            .map(|f| f.mode - slope[0] * f.center[0] - slope[1] * f.center[1])
            .collect();
        let init = match init_gmm(&data) {
            Ok(m) => m,
            Err(Error::Degenerate(_)) => return Ok((unresolved(slope), vec![Label::Unlabeled; feats.len()])),
            Err(e) => return Err(e),
        };
        let fit = em_fit(&data, &init, &cfg.em)?;
        let new_labels: Vec<Label> = (0..feats.len()).map(|i| classify(&fit.model, fit.responsibility(i))).collect();
        let stable = new_labels == labels;
        labels = new_labels;
        // Remove the class level, then re-estimate the slope.
        let means = fit.model.means();
        let target: Vec<f64> = feats
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let r = fit.responsibility(i);
                f.mode - r.iter().zip(&means).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        last = Some(fit);
        if stable || !cfg.block_trend {
            break;
        }
        match plane_slope(feats, &target) {
            Some(s) => slope = s,
            None => break,
        }
    }
    let fit = last.expect("at least one round runs");
    let comps = &fit.model.components;
    let near = fit.model.nearest_component();
    let far = 1 - near;
    let resolved = comps.len() == 2 && {
        let sep = comps[far].mean - comps[near].mean;
        let spread = comps[near].sigma.hypot(comps[far].sigma);
        sep >= cfg.min_separation
            && std::f64::consts::SQRT_2 * sep >= cfg.min_bimodality * spread
            && comps.iter().all(|c| c.weight >= cfg.min_weight)
    };
    let out = BlockFit {
        block,
        features: feats.len(),
        iterations: fit.iterations,
        loglik: fit.loglik,
        converged: fit.converged,
        sigma_clamped: fit.sigma_clamped,
        model: Some(fit.model),
        slope,
        resolved,
    };
    if !resolved {
        labels.iter_mut().for_each(|l| *l = Label::Unlabeled);
    }
    Ok((out, labels))
}

/// Least-squares `c0 + c1·cos θ + c2·sin θ` through `(θ, z)` samples.
fn harmonic_fit(samples: &[(f64, f64)]) -> Option<[f64; 3]> {
    if samples.len() < 3 {
        return None;
    }
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for &(t, z) in samples {
        let row = [1.0, t.cos(), t.sin()];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += row[i] * row[j];
            }
            b[i] += row[i] * z;
        }
    }
    solve3(a, b)
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    let scale = a[0][0] * a[1][1] * a[2][2];
    if !(d.abs() > 1e-9 * scale.abs()) {
        return None;
    }
    let mut x = [0.0; 3];
    for (c, xc) in x.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        *xc = det(&m) / d;
    }
    Some(x)
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

/// Segments the unrolled cloud into blade back and background.
pub fn segment(cloud: &UnrolledCloud, meta: &ScanMeta, cfg: &SegmentationConfig) -> Result<SegmentationResult> {
    cfg.validate()?;
    if !(meta.gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be positive, got {}", meta.gamma)));
    }
    if cloud.is_empty() {
        return Err(Error::InsufficientData("nothing left to segment".into()));
    }
    let mut warnings = Vec::new();
    // Bounding box first so the layout can be resolved to counts.
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &cloud.points {
        lo = [lo[0].min(p.x), lo[1].min(p.y)];
        hi = [hi[0].max(p.x), hi[1].max(p.y)];
    }
    let (blocks, patches) = cfg.layout.counts([hi[0] - lo[0], hi[1] - lo[1]]);
    let grid = build_grid(cloud, blocks, patches)?;
    let feats = patch_features(cloud, &grid, cfg.bin_width)?;

    let mut by_block: Vec<Vec<usize>> = vec![Vec::new(); grid.block_count()];
    for (i, f) in feats.iter().enumerate() {
        by_block[grid.block_of(f.patch)].push(i);
    }
    let mut feat_label = vec![Label::Unlabeled; feats.len()];
    let mut fits = Vec::with_capacity(grid.block_count());
    for (b, idx) in by_block.iter().enumerate() {
        let local: Vec<&PatchFeature> = idx.iter().map(|&i| &feats[i]).collect();
        let (fit, labels) = fit_block(b, &local, cfg)?;
        for (&i, l) in idx.iter().zip(labels) {
            feat_label[i] = l;
        }
        fits.push(fit);
    }

    // Patches of unresolved blocks are compared with the blade-back depth
    // of their block row.
    let gap = {
        let mut seps: Vec<f64> = fits
            .iter()
            .filter(|f| f.resolved)
            .filter_map(|f| f.model.as_ref())
            .map(|m| {
                let mut mu = m.means();
                mu.sort_by(f64::total_cmp);
                mu[1] - mu[0]
            })
            .collect();
        (!seps.is_empty()).then(|| median(&mut seps))
    };
    let rows = grid.blocks[0];
    let mut row_ref: Vec<Option<[f64; 3]>> = vec![None; rows];
    if gap.is_some() {
        let mut samples: Vec<Vec<(f64, f64)>> = vec![Vec::new(); rows];
        for (i, f) in feats.iter().enumerate() {
            if feat_label[i] == Label::BladeBack {
                let row = grid.block_of(f.patch) / grid.blocks[1];
                samples[row].push((f.center[1] / meta.gamma, f.mode));
            }
        }
        for r in 0..rows {
            row_ref[r] = harmonic_fit(&samples[r]).or_else(|| {
                if samples[r].is_empty() {
                    None
                } else {
                    let mut z: Vec<f64> = samples[r].iter().map(|s| s.1).collect();
                    Some([median(&mut z), 0.0, 0.0])
                }
            });
        }
        // Rows without a reference borrow the nearest one that has it.
        let have: Vec<usize> = (0..rows).filter(|&r| row_ref[r].is_some()).collect();
        let filled: Vec<Option<[f64; 3]>> = (0..rows)
            .map(|r| {
                row_ref[r].or_else(|| {
                    have.iter()
                        .min_by_key(|&&h| (h as i64 - r as i64).unsigned_abs() * 2 + (h > r) as u64)
                        .and_then(|&h| row_ref[h])
                })
            })
            .collect();
        row_ref = filled;
    }
    let mut fallback_blocks = 0;
    for (b, idx) in by_block.iter().enumerate() {
        if fits[b].resolved || idx.is_empty() {
            continue;
        }
        fallback_blocks += 1;
        let row = b / grid.blocks[1];
        for &i in idx {
            let f = &feats[i];
            feat_label[i] = match (row_ref[row], gap) {
                (Some(c), Some(g)) => {
                    let t = f.center[1] / meta.gamma;
                    let back = c[0] + c[1] * t.cos() + c[2] * t.sin();
                    if f.mode - back <= g / 2.0 {
                        Label::BladeBack
                    } else {
                        Label::Background
                    }
                }
                // Nothing resolved anywhere: a single surface, taken as
                // the blade back.
                _ => Label::BladeBack,
            };
        }
    }
    if gap.is_none() {
        warnings.push("no block showed two surfaces; all patches labelled blade back".to_string());
    } else if fallback_blocks > 0 {
        warnings.push(format!("{fallback_blocks} blocks labelled from the row reference"));
    }

    let mut patch_labels = vec![None; grid.patch_count()];
    let mut labels = vec![Label::Unlabeled; cloud.len()];
    for (f, &l) in feats.iter().zip(&feat_label) {
        patch_labels[f.patch] = Some(l);
        for &m in grid.members(f.patch) {
            labels[m as usize] = l;
        }
    }

    let mut sor_removed = 0;
    if let Some(sor) = &cfg.sor {
        let back: Vec<usize> = (0..cloud.len()).filter(|&i| labels[i] == Label::BladeBack).collect();
        let pts: Vec<[f64; 3]> = back
            .iter()
            .map(|&i| {
                let p = &cloud.points[i];
                [p.x, p.y, p.z]
            })
            .collect();
        let out = sor_filter(&pts, sor)?;
        if let Some(w) = out.warning.clone() {
            warnings.push(w);
        }
        for (&i, keep) in back.iter().zip(&out.keep) {
            if !keep {
                labels[i] = Label::Outlier;
            }
        }
        sor_removed = out.removed();
    }

    let fitted = fits.iter().filter(|f| f.model.is_some());
    let converged = fitted.clone().all(|f| f.converged);
    let iterations = fitted.clone().map(|f| f.iterations).max().unwrap_or(0);
    let loglik = fitted.map(|f| f.loglik).sum();
    Ok(SegmentationResult {
        labels,
        patch_labels,
        grid,
        blocks: fits,
        converged,
        iterations,
        loglik,
        sor_removed,
        warnings,
    })
}

/// Per-point two-component mixture over all depths, without any spatial
/// division. Kept as the reference the block method is compared against.
pub fn classical_gmm(cloud: &UnrolledCloud, em: &EmConfig) -> Result<(Vec<Label>, EmFit)> {
    let z: Vec<f64> = cloud.points.iter().map(|p| p.z).collect();
    let init = init_gmm(&z)?;
    let fit = em_fit(&z, &init, em)?;
    let labels = (0..z.len()).map(|i| classify(&fit.model, fit.responsibility(i))).collect();
    Ok((labels, fit))
}

/// Fraction of scan samples whose blade-back membership is predicted
/// correctly. `truth` is in scan order; samples absent from `cloud` count
/// as predicted background.
pub fn blade_back_accuracy(cloud: &UnrolledCloud, labels: &[Label], truth: &[Label]) -> f64 {
    let mut predicted: HashMap<usize, bool> = HashMap::with_capacity(cloud.len());
    for (p, l) in cloud.points.iter().zip(labels) {
        predicted.insert(p.source, *l == Label::BladeBack);
    }
    let correct = truth
        .iter()
        .enumerate()
        .filter(|(i, t)| predicted.get(i).copied().unwrap_or(false) == (**t == Label::BladeBack))
        .count();
    correct as f64 / truth.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::UnrolledPoint;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn mode_basic_cases() {
        assert_eq!(patch_mode(&[1.0, 1.0, 2.0], 1.0).unwrap(), 1.0);
        assert_eq!(patch_mode(&[7.5], 1.0).unwrap(), 8.0);
        assert_eq!(patch_mode(&[7.4], 1.0).unwrap(), 7.0);
        // Tie between bins 1 and 2 goes low.
        assert_eq!(patch_mode(&[2.1, 1.1], 1.0).unwrap(), 1.0);
        assert!(matches!(patch_mode(&[], 1.0), Err(Error::InsufficientData(_))));
        assert!(matches!(patch_mode(&[1.0], 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn mode_matches_histogram_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let a = Normal::new(145.0, 0.02).unwrap();
        let b = Normal::new(145.3, 0.015).unwrap();
        let z: Vec<f64> = (0..1000)
            .map(|_| if rng.gen_bool(0.4) { b.sample(&mut rng) } else { a.sample(&mut rng) })
            .collect();
        let w = 0.039;
        // Exhaustive scan over candidate bin centres.
        let lo = ((144.0 / w) as i64) - 1;
        let hi = ((146.5 / w) as i64) + 1;
        let mut best = (0usize, 0i64);
        for k in lo..=hi {
            let c = k as f64 * w;
            let n = z.iter().filter(|&&v| v >= c - w / 2.0 && v < c + w / 2.0).count();
            if n > best.0 {
                best = (n, k);
            }
        }
        assert!((patch_mode(&z, w).unwrap() - best.1 as f64 * w).abs() < 1e-12);
    }

    #[test]
    fn classify_ties_go_to_the_blade_back() {
        let m = GmmModel::new(vec![
            Component { weight: 0.5, mean: 2.0, sigma: 1.0 },
            Component { weight: 0.5, mean: 1.0, sigma: 1.0 },
        ])
        .unwrap();
        let mut r = [0.0; 2];
        m.posterior(1.0, &mut r);
        assert_eq!(classify(&m, &r), Label::BladeBack);
        m.posterior(1.5, &mut r);
        assert_eq!(r[0], r[1]);
        assert_eq!(classify(&m, &r), Label::BladeBack);
        m.posterior(2.0, &mut r);
        assert_eq!(classify(&m, &r), Label::Background);
    }

    fn terrace(noise: f64, seed: u64) -> (UnrolledCloud, Vec<Label>) {
        // Stripes of two depths 0.3 apart along y, with a gentle tilt.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, noise).unwrap();
        let mut points = Vec::new();
        let mut truth = Vec::new();
        for i in 0..200 {
            for j in 0..120 {
                let x = i as f64 * 0.1;
                let y = j as f64 * 0.1;
                let back = (y / 3.0).floor() as i64 % 2 == 0;
                let z = 145.0 + 0.004 * x + if back { 0.0 } else { 0.3 } + n.sample(&mut rng);
                points.push(UnrolledPoint { x, y, z, frame: j, source: points.len() });
                truth.push(if back { Label::BladeBack } else { Label::Background });
            }
        }
        (UnrolledCloud { points }, truth)
    }

    #[test]
    fn terraced_surface_is_split() {
        let (cloud, truth) = terrace(0.003, 1);
        let meta = ScanMeta::new(120, 200, 150.0, 12.0 / std::f64::consts::TAU);
        let cfg = SegmentationConfig {
            layout: GridLayout::Sizes { block: [6.0, 6.0], patch: [0.5, 0.5] },
            sor: None,
            ..SegmentationConfig::default()
        };
        let res = segment(&cloud, &meta, &cfg).unwrap();
        let acc = blade_back_accuracy(&cloud, &res.labels, &truth);
        assert!(acc > 0.99, "{acc}");
        // Patch labels propagate to every member.
        for id in 0..res.grid.patch_count() {
            for &m in res.grid.members(id) {
                assert_eq!(Some(res.labels[m as usize]), res.patch_labels[id]);
            }
        }
    }

    #[test]
    fn flat_surface_is_all_blade_back() {
        let mut points = Vec::new();
        for i in 0..50 {
            for j in 0..50 {
                points.push(UnrolledPoint { x: i as f64 * 0.1, y: j as f64 * 0.1, z: 145.0, frame: j, source: points.len() });
            }
        }
        let cloud = UnrolledCloud { points };
        let meta = ScanMeta::new(50, 50, 150.0, 1.0);
        let res = segment(&cloud, &meta, &SegmentationConfig { sor: None, ..Default::default() }).unwrap();
        assert_eq!(res.count(Label::BladeBack), 2500);
        assert!(!res.warnings.is_empty());
    }

    #[test]
    fn classical_baseline_splits_clean_depths() {
        let (cloud, truth) = terrace(0.003, 2);
        let (labels, fit) = classical_gmm(&cloud, &EmConfig::default()).unwrap();
        assert!(fit.model.k() == 2);
        assert!(blade_back_accuracy(&cloud, &labels, &truth) > 0.99);
    }

    #[test]
    fn accuracy_counts_missing_points_as_background() {
        let cloud = UnrolledCloud {
            points: vec![UnrolledPoint { x: 0.0, y: 0.0, z: 0.0, frame: 0, source: 1 }],
        };
        let truth = [Label::Background, Label::BladeBack, Label::BladeBack];
        let acc = blade_back_accuracy(&cloud, &[Label::BladeBack], &truth);
        assert!((acc - 2.0 / 3.0).abs() < 1e-15);
    }
}
