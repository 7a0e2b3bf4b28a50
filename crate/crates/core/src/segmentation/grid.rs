use crate::error::{Error, Result};
use crate::scan::UnrolledCloud;

/// Two-level uniform partition of the unrolled `(x, y)` bounding box.
///
/// The box is cut into `blocks[0] × blocks[1]` blocks (along `x` and `y`),
/// and every block into `patches[0] × patches[1]` patches. Depth is not
/// divided. Patches are addressed by a global cell `(gx, gy)` and stored in
/// compressed row form.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    pub origin: [f64; 2],
    pub extent: [f64; 2],
    pub blocks: [usize; 2],
    pub patches: [usize; 2],
    offsets: Vec<usize>,
    members: Vec<u32>,
}

impl BlockGrid {
    /// Total patch cells along `x` and `y`.
    pub fn cells(&self) -> [usize; 2] {
        [self.blocks[0] * self.patches[0], self.blocks[1] * self.patches[1]]
    }

    pub fn patch_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn block_count(&self) -> usize {
        self.blocks[0] * self.blocks[1]
    }

    pub fn patch_id(&self, gx: usize, gy: usize) -> usize {
        gx * self.cells()[1] + gy
    }

    pub fn patch_cell(&self, id: usize) -> (usize, usize) {
        let ny = self.cells()[1];
        (id / ny, id % ny)
    }

    /// Block index of a patch.
    pub fn block_of(&self, patch: usize) -> usize {
        let (gx, gy) = self.patch_cell(patch);
        (gx / self.patches[0]) * self.blocks[1] + gy / self.patches[1]
    }

    /// Patch ids belonging to block `b`.
    pub fn block_patches(&self, b: usize) -> impl Iterator<Item = usize> + '_ {
        let (bx, by) = (b / self.blocks[1], b % self.blocks[1]);
        let [m, n] = self.patches;
        (bx * m..(bx + 1) * m)
            .flat_map(move |gx| (by * n..(by + 1) * n).map(move |gy| self.patch_id(gx, gy)))
    }

    /// Indices (into the source cloud) of the points in a patch.
    pub fn members(&self, patch: usize) -> &[u32] {
        &self.members[self.offsets[patch]..self.offsets[patch + 1]]
    }

    pub fn patch_len(&self, patch: usize) -> usize {
        self.offsets[patch + 1] - self.offsets[patch]
    }

    /// Block width along `x` and `y`.
    pub fn block_size(&self) -> [f64; 2] {
        [
            self.extent[0] / self.blocks[0] as f64,
            self.extent[1] / self.blocks[1] as f64,
        ]
    }
}

fn cell_of(v: f64, origin: f64, extent: f64, cells: usize) -> usize {
    let k = ((v - origin) / extent * cells as f64).floor();
    (k.max(0.0) as usize).min(cells - 1)
}

/// Partitions `cloud` into blocks and patches over its `(x, y)` bounding
/// box. Points on the far edge fall in the last cell.
pub fn build_grid(
    cloud: &UnrolledCloud,
    block_counts: [usize; 2],
    patch_counts: [usize; 2],
) -> Result<BlockGrid> {
    if block_counts.iter().chain(&patch_counts).any(|&c| c == 0) {
        return Err(Error::Config("block and patch counts must be at least 1".into()));
    }
    if cloud.is_empty() {
        return Err(Error::InsufficientData("cannot grid an empty cloud".into()));
    }
    if cloud.len() > u32::MAX as usize {
        return Err(Error::Config("cloud too large to grid".into()));
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &cloud.points {
        lo[0] = lo[0].min(p.x);
        lo[1] = lo[1].min(p.y);
        hi[0] = hi[0].max(p.x);
        hi[1] = hi[1].max(p.y);
    }
    let extent = [hi[0] - lo[0], hi[1] - lo[1]];
    if !(extent[0] > 0.0 && extent[1] > 0.0) {
        return Err(Error::Degenerate(format!(
            "cloud bounding box has zero extent ({} x {})",
            extent[0], extent[1]
        )));
    }
    let cells = [block_counts[0] * patch_counts[0], block_counts[1] * patch_counts[1]];
    let total = cells[0] * cells[1];
    let cell_ids: Vec<usize> = cloud
        .points
        .iter()
        .map(|p| {
            let gx = cell_of(p.x, lo[0], extent[0], cells[0]);
            let gy = cell_of(p.y, lo[1], extent[1], cells[1]);
            gx * cells[1] + gy
        })
        .collect();
    let mut offsets = vec![0usize; total + 1];
    for &c in &cell_ids {
        offsets[c + 1] += 1;
    }
    for k in 0..total {
        offsets[k + 1] += offsets[k];
    }
    let mut cursor = offsets.clone();
    let mut members = vec![0u32; cloud.len()];
    for (i, &c) in cell_ids.iter().enumerate() {
        members[cursor[c]] = i as u32;
        cursor[c] += 1;
    }
    Ok(BlockGrid {
        origin: lo,
        extent,
        blocks: block_counts,
        patches: patch_counts,
        offsets,
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::UnrolledPoint;
    use rand::{Rng, SeedableRng};

    fn cloud(xy: &[(f64, f64)]) -> UnrolledCloud {
        UnrolledCloud {
            points: xy
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| UnrolledPoint { x, y, z: 0.0, frame: i, source: i })
                .collect(),
        }
    }

    #[test]
    fn unit_square_corners_one_per_block() {
        let c = cloud(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        let g = build_grid(&c, [2, 2], [1, 1]).unwrap();
        for b in 0..4 {
            let n: usize = g.block_patches(b).map(|p| g.patch_len(p)).sum();
            assert_eq!(n, 1);
        }
    }

    #[test]
    fn single_cell_holds_everything() {
        let c = cloud(&[(0.0, 0.0), (0.3, 2.0), (5.0, 1.0)]);
        let g = build_grid(&c, [1, 1], [1, 1]).unwrap();
        assert_eq!(g.patch_count(), 1);
        assert_eq!(g.members(0), &[0, 1, 2]);
    }

    #[test]
    fn degenerate_and_empty_inputs() {
        let c = cloud(&[(1.0, 0.0), (1.0, 2.0)]);
        assert!(matches!(build_grid(&c, [2, 2], [1, 1]), Err(Error::Degenerate(_))));
        assert!(matches!(
            build_grid(&UnrolledCloud::default(), [1, 1], [1, 1]),
            Err(Error::InsufficientData(_))
        ));
        let c = cloud(&[(0.0, 0.0), (1.0, 1.0)]);
        assert!(matches!(build_grid(&c, [0, 1], [1, 1]), Err(Error::Config(_))));
    }

    #[test]
    fn counts_match_brute_force_binning() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<(f64, f64)> = (0..10_000)
            .map(|_| (rng.gen_range(-3.0..17.0), rng.gen_range(2.0..9.0)))
            .collect();
        let c = cloud(&pts);
        let g = build_grid(&c, [8, 8], [4, 4]).unwrap();
        let (x0, x1) = pts.iter().fold((f64::MAX, f64::MIN), |a, p| (a.0.min(p.0), a.1.max(p.0)));
        let (y0, y1) = pts.iter().fold((f64::MAX, f64::MIN), |a, p| (a.0.min(p.1), a.1.max(p.1)));
        let mut brute = vec![0usize; 32 * 32];
        for &(x, y) in &pts {
            // Scan the cell edges explicitly rather than dividing.
            let wx = (x1 - x0) / 32.0;
            let wy = (y1 - y0) / 32.0;
            let mut gx = 0;
            while gx < 31 && x >= x0 + wx * (gx + 1) as f64 {
                gx += 1;
            }
            let mut gy = 0;
            while gy < 31 && y >= y0 + wy * (gy + 1) as f64 {
                gy += 1;
            }
            brute[gx * 32 + gy] += 1;
        }
        let mut total = 0;
        for id in 0..g.patch_count() {
            assert_eq!(g.patch_len(id), brute[id], "patch {id}");
            total += g.patch_len(id);
        }
        assert_eq!(total, 10_000);
        // Every point sits in exactly one patch.
        let mut seen = vec![false; 10_000];
        for id in 0..g.patch_count() {
            for &m in g.members(id) {
                assert!(!seen[m as usize]);
                seen[m as usize] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn block_patch_mapping_round_trips() {
        let c = cloud(&[(0.0, 0.0), (1.0, 1.0)]);
        let g = build_grid(&c, [3, 5], [2, 4]).unwrap();
        for b in 0..g.block_count() {
            let ids: Vec<usize> = g.block_patches(b).collect();
            assert_eq!(ids.len(), 8);
            assert!(ids.iter().all(|&p| g.block_of(p) == b));
        }
    }
}
