//! Accumulated point-cloud map on a two-level spatial hash: fine cells hold
//! points, coarse blocks of `BLOCK³` cells list their occupied cells so that
//! range queries in empty space touch only a handful of buckets.

use rustc_hash::FxHashMap;

use crate::config::PcMapConfig;
use crate::geom::{point_segment_distance, Aabb, Vec3, VoxelKey};
use crate::world::ScanFrame;

/// Cells per block edge.
pub const BLOCK: i32 = 8;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InsertResult {
    /// Cells that gained at least one point, in first-gain order.
    pub touched: Vec<VoxelKey>,
    /// Subset of `touched` that held no point before this insert.
    pub new_cells: Vec<VoxelKey>,
    pub inserted: usize,
}

#[derive(Clone, Debug)]
pub struct PointCloudMap {
    cfg: PcMapConfig,
    cells: FxHashMap<VoxelKey, Vec<Vec3>>,
    blocks: FxHashMap<VoxelKey, Vec<VoxelKey>>,
    point_count: usize,
}

fn div_floor(a: i32, b: i32) -> i32 {
    a.div_euclid(b)
}

impl PointCloudMap {
    pub fn new(cfg: PcMapConfig) -> Self {
        Self {
            cfg,
            cells: FxHashMap::default(),
            blocks: FxHashMap::default(),
            point_count: 0,
        }
    }

    pub fn config(&self) -> &PcMapConfig {
        &self.cfg
    }

    pub fn cell_size(&self) -> f64 {
        self.cfg.cell_size
    }

    pub fn search_cap(&self) -> f64 {
        self.cfg.search_cap
    }

    pub fn point_count(&self) -> usize {
        self.point_count
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_count == 0
    }

    pub fn cell_key(&self, p: &Vec3) -> VoxelKey {
        VoxelKey::from_point(p, &Vec3::zeros(), self.cfg.cell_size)
    }

    pub fn cell_box(&self, k: &VoxelKey) -> Aabb {
        k.cell_box(&Vec3::zeros(), self.cfg.cell_size)
    }

    pub fn cell_center(&self, k: &VoxelKey) -> Vec3 {
        k.center(&Vec3::zeros(), self.cfg.cell_size)
    }

    pub fn block_of(cell: &VoxelKey) -> VoxelKey {
        VoxelKey::new(
            div_floor(cell.x, BLOCK),
            div_floor(cell.y, BLOCK),
            div_floor(cell.z, BLOCK),
        )
    }

    fn block_key(&self, p: &Vec3) -> VoxelKey {
        VoxelKey::from_point(p, &Vec3::zeros(), self.cfg.cell_size * BLOCK as f64)
    }

    pub fn is_occupied(&self, k: &VoxelKey) -> bool {
        self.cells.contains_key(k)
    }

    pub fn cell_points(&self, k: &VoxelKey) -> &[Vec3] {
        self.cells.get(k).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = &VoxelKey> {
        self.cells.keys()
    }

    pub fn points(&self) -> impl Iterator<Item = &Vec3> {
        self.cells.values().flatten()
    }

    /// All stored points in a deterministic order (sorted by cell key).
    pub fn sorted_points(&self) -> Vec<Vec3> {
        let mut keys: Vec<_> = self.cells.keys().copied().collect();
        keys.sort_unstable();
        keys.iter().flat_map(|k| self.cells[k].iter().copied()).collect()
    }

    pub fn insert_frame(&mut self, frame: &ScanFrame) -> InsertResult {
        self.insert_points(frame.hits().copied())
    }

    pub fn insert_points(&mut self, points: impl IntoIterator<Item = Vec3>) -> InsertResult {
        let mut out = InsertResult::default();
        let spacing2 = self.cfg.min_point_spacing * self.cfg.min_point_spacing;
        for p in points {
            let key = self.cell_key(&p);
            let entry = self.cells.entry(key);
            let cell = match entry {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => {
                    self.blocks
                        .entry(Self::block_of(&key))
                        .or_default()
                        .push(key);
                    out.new_cells.push(key);
                    e.insert(Vec::new())
                }
            };
            if cell.iter().any(|q| (q - p).norm_squared() < spacing2) {
                continue;
            }
            cell.push(p);
            self.point_count += 1;
            out.inserted += 1;
            out.touched.push(key);
        }
        let mut seen = rustc_hash::FxHashSet::default();
        out.touched.retain(|k| seen.insert(*k));
        out
    }

    /// Best-first walk over blocks within `cap` of `p`. `visit` receives a
    /// cell and the current best value and returns an improved candidate.
    fn search<F>(&self, p: &Vec3, cap: f64, mut visit: F) -> f64
    where
        F: FnMut(&VoxelKey, f64) -> f64,
    {
        let mut best = cap;
        if self.cells.is_empty() {
            return best;
        }
        let bsize = self.cfg.cell_size * BLOCK as f64;
        let b0 = self.block_key(p);
        let max_ring = (cap / bsize).ceil() as i32 + 1;
        for ring in 0..=max_ring {
            if ring > 0 {
                // everything outside the (ring-1) cube is at least this far
                let lo = Vec3::new(
                    (b0.x - ring + 1) as f64 * bsize,
                    (b0.y - ring + 1) as f64 * bsize,
                    (b0.z - ring + 1) as f64 * bsize,
                );
                let hi = Vec3::new(
                    (b0.x + ring) as f64 * bsize,
                    (b0.y + ring) as f64 * bsize,
                    (b0.z + ring) as f64 * bsize,
                );
                let lb = (p - lo).min().min((hi - p).min());
                if lb >= best {
                    break;
                }
            }
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let bk = b0.offset(dx, dy, dz);
                        let Some(cells) = self.blocks.get(&bk) else {
                            continue;
                        };
                        let bbox = bk.cell_box(&Vec3::zeros(), bsize);
                        if bbox.distance_to_point(p) >= best {
                            continue;
                        }
                        for c in cells {
                            if self.cell_box(c).distance_to_point(p) >= best {
                                continue;
                            }
                            best = best.min(visit(c, best));
                        }
                    }
                }
            }
        }
        best
    }

    /// Exact distance to the nearest stored point, saturated at the
    /// configured search cap.
    pub fn nearest_distance(&self, p: &Vec3) -> f64 {
        self.nearest_within(p, self.cfg.search_cap)
    }

    /// `min(nearest point distance, cap)`.
    pub fn nearest_within(&self, p: &Vec3, cap: f64) -> f64 {
        self.search(p, cap, |c, best| {
            let mut b2 = best * best;
            for q in &self.cells[c] {
                b2 = b2.min((q - p).norm_squared());
            }
            b2.sqrt()
        })
    }

    /// Distance from `p` to the nearest occupied cell box, saturated at
    /// `cap`. Never exceeds the nearest point distance.
    pub fn cell_clearance(&self, p: &Vec3, cap: f64) -> f64 {
        self.search(p, cap, |c, _| self.cell_box(c).distance_to_point(p))
    }

    /// Calls `f` on every stored point within `r` of `p`.
    pub fn for_points_within(&self, p: &Vec3, r: f64, mut f: impl FnMut(&Vec3)) {
        let r2 = r * r;
        self.for_cells_within(p, r, |c| {
            for q in &self.cells[c] {
                if (q - p).norm_squared() <= r2 {
                    f(q);
                }
            }
        });
    }

    /// Calls `f` on every occupied cell whose box is within `r` of `p`.
    pub fn for_cells_within(&self, p: &Vec3, r: f64, mut f: impl FnMut(&VoxelKey)) {
        let bsize = self.cfg.cell_size * BLOCK as f64;
        let lo = self.block_key(&(p - Vec3::repeat(r)));
        let hi = self.block_key(&(p + Vec3::repeat(r)));
        for x in lo.x..=hi.x {
            for y in lo.y..=hi.y {
                for z in lo.z..=hi.z {
                    let bk = VoxelKey::new(x, y, z);
                    let Some(cells) = self.blocks.get(&bk) else {
                        continue;
                    };
                    if bk.cell_box(&Vec3::zeros(), bsize).distance_to_point(p) > r {
                        continue;
                    }
                    for c in cells {
                        if self.cell_box(c).distance_to_point(p) <= r {
                            f(c);
                        }
                    }
                }
            }
        }
    }

    /// True iff no stored point lies strictly within `clearance` of the
    /// segment `ab`.
    pub fn segment_clear(&self, a: &Vec3, b: &Vec3, clearance: f64) -> bool {
        trace_segment(
            a,
            b,
            clearance,
            |q, cap| self.nearest_within(q, cap),
            |q0, q1| {
                let mid = (q0 + q1) * 0.5;
                let reach = clearance + 0.5 * (q1 - q0).norm();
                let mut clear = true;
                self.for_points_within(&mid, reach, |pt| {
                    if clear && point_segment_distance(pt, q0, q1) < clearance {
                        clear = false;
                    }
                });
                clear
            },
            self.cfg.search_cap,
        )
    }

    /// True iff no occupied cell box lies strictly within `clearance` of the
    /// segment `ab`. Stricter than [`segment_clear`](Self::segment_clear).
    pub fn segment_cells_clear(&self, a: &Vec3, b: &Vec3, clearance: f64) -> bool {
        trace_segment(
            a,
            b,
            clearance,
            |q, cap| self.cell_clearance(q, cap),
            |q0, q1| {
                let mid = (q0 + q1) * 0.5;
                let reach = clearance + 0.5 * (q1 - q0).norm();
                let mut clear = true;
                self.for_cells_within(&mid, reach, |c| {
                    if clear && self.cell_box(c).segment_distance(q0, q1) < clearance {
                        clear = false;
                    }
                });
                clear
            },
            self.cfg.search_cap,
        )
    }

    /// Analytic storage estimate: point payloads, per-cell key and vector
    /// headers, block index entries, plus one control byte per hash slot.
    pub fn memory_bytes(&self) -> usize {
        let point = std::mem::size_of::<Vec3>();
        let cell = std::mem::size_of::<(VoxelKey, Vec<Vec3>)>() + 1;
        let block = std::mem::size_of::<(VoxelKey, Vec<VoxelKey>)>() + 1;
        std::mem::size_of::<Self>()
            + self.point_count * point
            + self.cells.len() * (cell + std::mem::size_of::<VoxelKey>())
            + self.blocks.len() * block
    }
}

/// Sphere tracing along `ab`: at a sample with free radius `d` the next
/// `d - clearance` metres cannot come within `clearance` of anything. When
/// progress stalls the next `clearance` metres are settled by `exact`.
fn trace_segment<D, E>(a: &Vec3, b: &Vec3, clearance: f64, dist: D, exact: E, cap: f64) -> bool
where
    D: Fn(&Vec3, f64) -> f64,
    E: Fn(&Vec3, &Vec3) -> bool,
{
    let len = (b - a).norm();
    let dir = if len > 0.0 { (b - a) / len } else { Vec3::zeros() };
    let query_cap = cap.max(clearance + 1e-9).min(clearance + 2.0);
    let min_step = (clearance * 0.1).max(1e-3);
    let mut t = 0.0;
    loop {
        let q = a + dir * t;
        let d = dist(&q, query_cap);
        if d < clearance {
            return false;
        }
        let step = d - clearance;
        if t + step >= len {
            return true;
        }
        if step >= min_step {
            t += step;
            continue;
        }
        let t2 = (t + clearance).min(len);
        if !exact(&q, &(a + dir * t2)) {
            return false;
        }
        if t2 >= len {
            return true;
        }
        t = t2;
    }
}
