use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SorConfig {
    pub k_neighbors: usize,
    pub std_multiplier: f64,
}

impl Default for SorConfig {
    fn default() -> Self {
        SorConfig { k_neighbors: 8, std_multiplier: 3.0 }
    }
}

impl SorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::Config("SOR k_neighbors must be at least 1".into()));
        }
        if !(self.std_multiplier >= 0.0 && self.std_multiplier.is_finite()) {
            return Err(Error::Config(format!(
                "SOR std_multiplier must be finite and >= 0, got {}",
                self.std_multiplier
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SorOutcome {
    /// `true` for points that survive.
    pub keep: Vec<bool>,
    /// Mean-distance cut-off; `None` when the filter was skipped.
    pub threshold: Option<f64>,
    pub warning: Option<String>,
}

impl SorOutcome {
    pub fn removed(&self) -> usize {
        self.keep.iter().filter(|&&k| !k).count()
    }
}

/// Statistical outlier removal.
///
/// A point goes when the mean distance to its `k` nearest neighbours
/// exceeds the population mean of that statistic by more than
/// `std_multiplier` standard deviations. With `k` or fewer points the
/// filter keeps everything and reports a warning.
pub fn sor_filter(points: &[[f64; 3]], cfg: &SorConfig) -> Result<SorOutcome> {
    cfg.validate()?;
    let k = cfg.k_neighbors;
    if points.len() <= k {
        return Ok(SorOutcome {
            keep: vec![true; points.len()],
            threshold: None,
            warning: Some(format!(
                "SOR skipped: {} points is not more than k = {k}",
                points.len()
            )),
        });
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("SOR input holds a non-finite coordinate".into()));
    }
    let index = ColumnIndex::new(points, k);
    let mut best = Vec::with_capacity(k);
    let mean_dist: Vec<f64> = (0..points.len())
        .map(|i| {
            index.nearest(points, i, k, &mut best);
            best.iter().map(|d| d.sqrt()).sum::<f64>() / best.len() as f64
        })
        .collect();
    let n = mean_dist.len() as f64;
    let mu = mean_dist.iter().sum::<f64>() / n;
    let var = mean_dist.iter().map(|d| (d - mu) * (d - mu)).sum::<f64>() / n;
    let threshold = mu + cfg.std_multiplier * var.sqrt();
    Ok(SorOutcome {
        keep: mean_dist.iter().map(|&d| d <= threshold).collect(),
        threshold: Some(threshold),
        warning: None,
    })
}

/// Exact k-nearest-neighbour search over points bucketed into square
/// columns of the `(x, y)` plane. Suited to scans, which are thin sheets
/// sampled on a near-regular lattice with many shared coordinates.
struct ColumnIndex {
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    offsets: Vec<usize>,
    members: Vec<u32>,
}

impl ColumnIndex {
    fn new(points: &[[f64; 3]], k: usize) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let ext = [hi[0] - lo[0], hi[1] - lo[1]];
        // Aim for about k + 1 points per occupied column.
        let area = ext[0].max(ext[1] * 1e-3).max(1e-9) * ext[1].max(ext[0] * 1e-3).max(1e-9);
        let mut cell = (area * (k + 1) as f64 / points.len() as f64).sqrt();
        let limit = 4 * points.len() + 1024;
        loop {
            let d = [(ext[0] / cell) as usize + 1, (ext[1] / cell) as usize + 1];
            if d[0].saturating_mul(d[1]) <= limit {
                break;
            }
            cell *= 1.5;
        }
        let dims = [(ext[0] / cell) as usize + 1, (ext[1] / cell) as usize + 1];
        let key = |p: &[f64; 3]| {
            let cx = (((p[0] - lo[0]) / cell) as usize).min(dims[0] - 1);
            let cy = (((p[1] - lo[1]) / cell) as usize).min(dims[1] - 1);
            cx * dims[1] + cy
        };
        let mut offsets = vec![0usize; dims[0] * dims[1] + 1];
        for p in points {
            offsets[key(p) + 1] += 1;
        }
        for c in 0..dims[0] * dims[1] {
            offsets[c + 1] += offsets[c];
        }
        let mut cursor = offsets.clone();
        let mut members = vec![0u32; points.len()];
        for (i, p) in points.iter().enumerate() {
            let c = key(p);
            members[cursor[c]] = i as u32;
            cursor[c] += 1;
        }
        ColumnIndex { origin: lo, cell, dims, offsets, members }
    }

    /// Squared distances from point `i` to its `k` nearest other points,
    /// ascending, written into `best`.
    fn nearest(&self, points: &[[f64; 3]], i: usize, k: usize, best: &mut Vec<f64>) {
        best.clear();
        let q = points[i];
        let cx = (((q[0] - self.origin[0]) / self.cell) as usize).min(self.dims[0] - 1) as i64;
        let cy = (((q[1] - self.origin[1]) / self.cell) as usize).min(self.dims[1] - 1) as i64;
        let (nx, ny) = (self.dims[0] as i64, self.dims[1] as i64);
        let max_ring = (cx.max(nx - 1 - cx)).max(cy.max(ny - 1 - cy));
        let visit = |gx: i64, gy: i64, best: &mut Vec<f64>| {
            if gx < 0 || gy < 0 || gx >= nx || gy >= ny {
                return;
            }
            let c = (gx * ny + gy) as usize;
            for &m in &self.members[self.offsets[c]..self.offsets[c + 1]] {
                if m as usize == i {
                    continue;
                }
                let p = points[m as usize];
                let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                if best.len() < k {
                    let at = best.partition_point(|&b| b <= d);
                    best.insert(at, d);
                } else if d < best[k - 1] {
                    best.pop();
                    let at = best.partition_point(|&b| b <= d);
                    best.insert(at, d);
                }
            }
        };
        for r in 0..=max_ring {
            if r == 0 {
                visit(cx, cy, best);
            } else {
                for gx in cx - r..=cx + r {
                    visit(gx, cy - r, best);
                    visit(gx, cy + r, best);
                }
                for gy in cy - r + 1..cy + r {
                    visit(cx - r, gy, best);
                    visit(cx + r, gy, best);
                }
            }
            // Anything beyond ring r lies at least r cells away in x or y.
            let reach = r as f64 * self.cell;
            if best.len() == k && best[k - 1] <= reach * reach {
                break;
            }
        }
    }
}
