//! Grid A* over a global lattice in free space, used to connect vertex pairs
//! that cannot see each other.
//!
//! A node is free when the nearest occupied cell is at least
//! `safety + pitch·√3/2` away. Every move joins nodes at most `pitch·√3`
//! apart, so each point of a move lies within `pitch·√3/2` of a free node
//! and the whole polyline keeps `safety` clearance.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rustc_hash::{FxHashMap, FxHashSet};

use crate::geom::{Aabb, Vec3, VoxelKey};
use crate::pcmap::PointCloudMap;

const NB: i32 = 8;
const UNKNOWN: u8 = 0;
const FREE: u8 = 1;
const BLOCKED: u8 = 2;

const START: VoxelKey = VoxelKey::new(i32::MIN, i32::MIN, i32::MIN);
const GOAL: VoxelKey = VoxelKey::new(i32::MAX, i32::MAX, i32::MAX);

#[derive(Clone, Debug)]
pub struct Lattice {
    pitch: f64,
    safety: f64,
    margin: f64,
    cache: FxHashMap<VoxelKey, Box<[u8; 512]>>,
}

fn split(k: &VoxelKey) -> (VoxelKey, usize) {
    let b = VoxelKey::new(k.x.div_euclid(NB), k.y.div_euclid(NB), k.z.div_euclid(NB));
    let i = (k.x.rem_euclid(NB) * 64 + k.y.rem_euclid(NB) * 8 + k.z.rem_euclid(NB)) as usize;
    (b, i)
}

impl Lattice {
    pub fn new(pitch: f64, safety: f64) -> Self {
        Self {
            pitch,
            safety,
            margin: safety + pitch * 3f64.sqrt() * 0.5,
            cache: FxHashMap::default(),
        }
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    /// Clearance a node needs to count as free.
    pub fn node_margin(&self) -> f64 {
        self.margin
    }

    pub fn key(&self, p: &Vec3) -> VoxelKey {
        VoxelKey::from_point(p, &Vec3::zeros(), self.pitch)
    }

    pub fn center(&self, k: &VoxelKey) -> Vec3 {
        k.center(&Vec3::zeros(), self.pitch)
    }

    pub fn is_free(&mut self, map: &PointCloudMap, k: &VoxelKey) -> bool {
        let (b, i) = split(k);
        let block = self.cache.entry(b).or_insert_with(|| Box::new([UNKNOWN; 512]));
        if block[i] == UNKNOWN {
            let c = k.center(&Vec3::zeros(), self.pitch);
            let d = map.cell_clearance(&c, self.margin + 1e-6);
            block[i] = if d >= self.margin { FREE } else { BLOCKED };
        }
        block[i] == FREE
    }

    /// Drops cached states that a newly occupied cell could affect.
    pub fn invalidate(&mut self, boxes: impl IntoIterator<Item = Aabb>) {
        if self.cache.is_empty() {
            return;
        }
        let mut gone = FxHashSet::default();
        for b in boxes {
            let g = b.inflate(self.margin + self.pitch);
            let (lo, _) = split(&self.key(&g.min));
            let (hi, _) = split(&self.key(&g.max));
            for x in lo.x..=hi.x {
                for y in lo.y..=hi.y {
                    for z in lo.z..=hi.z {
                        let k = VoxelKey::new(x, y, z);
                        if gone.insert(k) {
                            self.cache.remove(&k);
                        }
                    }
                }
            }
        }
    }

    pub fn clear_cache(&mut self) {
        self.cache.clear();
    }

    fn links(&mut self, map: &PointCloudMap, p: &Vec3, scope: &Aabb) -> Vec<(VoxelKey, f64)> {
        let k0 = self.key(p);
        let mut out = Vec::new();
        for k in k0.block27() {
            let c = self.center(&k);
            if !scope.contains(&c) || !self.is_free(map, &k) {
                continue;
            }
            if map.segment_cells_clear(p, &c, self.safety) {
                out.push((k, (c - p).norm()));
            }
        }
        out
    }

    /// Shortest lattice route between `start` and `goal` through free nodes
    /// whose centres lie in `scope`. The returned polyline begins at `start`
    /// and ends at `goal`.
    pub fn search(&mut self, map: &PointCloudMap, start: &Vec3, goal: &Vec3, scope: &Aabb) -> Option<Vec<Vec3>> {
        let starts = self.links(map, start, scope);
        if starts.is_empty() {
            return None;
        }
        let goals: FxHashMap<VoxelKey, f64> = self.links(map, goal, scope).into_iter().collect();
        if goals.is_empty() {
            return None;
        }
        let h = |c: &Vec3| (c - goal).norm();
        let mut best: FxHashMap<VoxelKey, (f64, VoxelKey)> = FxHashMap::default();
        let mut closed: FxHashSet<VoxelKey> = FxHashSet::default();
        let mut open = BinaryHeap::new();
        for (k, d) in &starts {
            best.insert(*k, (*d, START));
            open.push(Reverse(((d + h(&self.center(k))).to_bits(), *k)));
        }
        let mut goal_g = f64::INFINITY;
        let mut goal_parent = START;
        while let Some(Reverse((_, k))) = open.pop() {
            if k == GOAL {
                break;
            }
            if !closed.insert(k) {
                continue;
            }
            let g = best[&k].0;
            if let Some(link) = goals.get(&k) {
                let total = g + link;
                if total < goal_g {
                    goal_g = total;
                    goal_parent = k;
                    open.push(Reverse((total.to_bits(), GOAL)));
                }
            }
            for n in k.neighbors26() {
                if closed.contains(&n) {
                    continue;
                }
                let c = self.center(&n);
                if !scope.contains(&c) || !self.is_free(map, &n) {
                    continue;
                }
                let step = ((n.x - k.x).abs() + (n.y - k.y).abs() + (n.z - k.z).abs()) as f64;
                let ng = g + self.pitch * step.sqrt();
                if best.get(&n).is_none_or(|(og, _)| ng < *og) {
                    best.insert(n, (ng, k));
                    open.push(Reverse(((ng + h(&c)).to_bits(), n)));
                }
            }
        }
        if !goal_g.is_finite() {
            return None;
        }
        let mut nodes = Vec::new();
        let mut cur = goal_parent;
        while cur != START {
            nodes.push(self.center(&cur));
            cur = best[&cur].1;
        }
        nodes.reverse();
        let mut path = Vec::with_capacity(nodes.len() + 2);
        path.push(*start);
        path.extend(nodes);
        path.push(*goal);
        Some(path)
    }

    /// Whether a stored lattice route still qualifies: interior nodes free
    /// and both end links clear.
    pub fn route_valid(&mut self, map: &PointCloudMap, path: &[Vec3]) -> bool {
        if path.len() < 3 {
            return false;
        }
        let n = path.len();
        for p in &path[1..n - 1] {
            let k = self.key(p);
            if !self.is_free(map, &k) {
                return false;
            }
        }
        map.segment_cells_clear(&path[0], &path[1], self.safety)
            && map.segment_cells_clear(&path[n - 2], &path[n - 1], self.safety)
    }
}
