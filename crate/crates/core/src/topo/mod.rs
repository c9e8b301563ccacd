//! Incremental topological graph over free space, built on the point cloud.
//!
//! Space is cut into cuboid regions. Each region's free space is covered by
//! collision-free spheres, spheres are grouped by overlap, and each group
//! gets one representative vertex. Vertices in neighbouring regions are
//! joined by edges that carry a collision-free path. All collision tests run
//! against occupied map cells, so the graph is a function of the occupied
//! cell set alone.

pub mod cover;
pub mod lattice;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;
use thiserror::Error;

use crate::config::TopoConfig;
use crate::exec::{self, ExecMode};
use crate::geom::{polyline_length, Aabb, Vec3, VoxelKey};
use crate::pcmap::PointCloudMap;
use crate::unionfind::UnionFind;
use cover::{cluster_spheres, cover_region, Sphere};
use lattice::Lattice;

pub type VertexId = u32;

/// The odometry vertex always uses this id.
pub const ODOM_ID: VertexId = 0;

#[derive(Debug, Error, PartialEq)]
pub enum TopoError {
    #[error("no edge could be built from {0:?}")]
    NoConnection([f64; 3]),
    #[error("point {0:?} lies outside the graph bounds")]
    OutOfBounds([f64; 3]),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexKind {
    Regular,
    Odom,
    ViewpointTemp,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Vertex {
    pub id: VertexId,
    pub position: Vec3,
    pub region: VoxelKey,
    pub kind: VertexKind,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Edge {
    pub a: VertexId,
    pub b: VertexId,
    /// Path from `a` to `b`.
    pub path: Vec<Vec3>,
    pub length: f64,
    /// Found by lattice search rather than a direct segment.
    pub routed: bool,
    #[serde(skip)]
    bbox: Aabb,
}

impl Edge {
    fn new(a: VertexId, b: VertexId, path: Vec<Vec3>, routed: bool) -> Self {
        let bbox = Aabb::from_points(&path);
        Self {
            a,
            b,
            length: polyline_length(&path),
            path,
            routed,
            bbox,
        }
    }

    pub fn other(&self, v: VertexId) -> VertexId {
        if v == self.a {
            self.b
        } else {
            self.a
        }
    }

    /// Path oriented to start at `from`.
    pub fn path_from(&self, from: VertexId) -> Vec<Vec3> {
        if from == self.a {
            self.path.clone()
        } else {
            self.path.iter().rev().copied().collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub key: VoxelKey,
    /// Region cuboid clipped to the graph bounds.
    pub bounds: Aabb,
    pub vertices: Vec<VertexId>,
    /// Clearance queries of the last cover, used to decide whether new
    /// occupied cells can change it.
    queries: Vec<(Vec3, f64)>,
}

/// Marker taken before temporary insertions; see [`TopoGraph::rollback`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Checkpoint {
    next_id: VertexId,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TopoFrameStats {
    pub regions_updated: usize,
    pub regions_initialized: usize,
    pub removed: usize,
    pub remained: usize,
    pub inserted: usize,
    pub edges_added: usize,
    pub edges_removed: usize,
    pub edges_rechecked: usize,
    pub pairs_searched: usize,
}

/// Set algebra between a region's vertex ids before and after an update:
/// `(removed, remained, inserted)`.
pub fn categorize_vertices(
    pre: &BTreeSet<VertexId>,
    new: &BTreeSet<VertexId>,
) -> (BTreeSet<VertexId>, BTreeSet<VertexId>, BTreeSet<VertexId>) {
    (
        pre.difference(new).copied().collect(),
        pre.intersection(new).copied().collect(),
        new.difference(pre).copied().collect(),
    )
}

#[derive(Clone, Debug)]
pub struct TopoGraph {
    cfg: TopoConfig,
    bounds: Aabb,
    regions: BTreeMap<VoxelKey, Region>,
    vertices: BTreeMap<VertexId, Vertex>,
    edges: BTreeMap<(VertexId, VertexId), Edge>,
    adj: BTreeMap<VertexId, BTreeSet<VertexId>>,
    next_id: VertexId,
    lattice: Lattice,
}

impl PartialEq for TopoGraph {
    fn eq(&self, o: &Self) -> bool {
        self.cfg == o.cfg
            && self.bounds == o.bounds
            && self.regions == o.regions
            && self.vertices == o.vertices
            && self.edges == o.edges
            && self.adj == o.adj
            && self.next_id == o.next_id
    }
}

fn pair(a: VertexId, b: VertexId) -> (VertexId, VertexId) {
    (a.min(b), a.max(b))
}

struct RegionCover {
    reps: Vec<Vec3>,
    queries: Vec<(Vec3, f64)>,
}

impl TopoGraph {
    pub fn new(cfg: TopoConfig, bounds: Aabb) -> Self {
        let lattice = Lattice::new(cfg.astar_pitch, cfg.safety_radius);
        Self {
            cfg,
            bounds,
            regions: BTreeMap::new(),
            vertices: BTreeMap::new(),
            edges: BTreeMap::new(),
            adj: BTreeMap::new(),
            next_id: ODOM_ID + 1,
            lattice,
        }
    }

    pub fn config(&self) -> &TopoConfig {
        &self.cfg
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.values()
    }

    pub fn vertex(&self, id: VertexId) -> Option<&Vertex> {
        self.vertices.get(&id)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn edge(&self, a: VertexId, b: VertexId) -> Option<&Edge> {
        self.edges.get(&pair(a, b))
    }

    pub fn neighbors(&self, v: VertexId) -> impl Iterator<Item = VertexId> + '_ {
        self.adj.get(&v).into_iter().flatten().copied()
    }

    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.regions.values()
    }

    pub fn region(&self, k: &VoxelKey) -> Option<&Region> {
        self.regions.get(k)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn odom(&self) -> Option<&Vertex> {
        self.vertices.get(&ODOM_ID)
    }

    pub fn region_key(&self, p: &Vec3) -> VoxelKey {
        VoxelKey::from_point(p, &self.bounds.min, self.cfg.region_size)
    }

    pub fn region_box(&self, k: &VoxelKey) -> Aabb {
        k.cell_box(&self.bounds.min, self.cfg.region_size)
            .intersection(&self.bounds)
    }

    fn radius_cap(&self) -> f64 {
        self.cfg.effective_radius_cap()
    }

    fn cover(&self, map: &PointCloudMap, bounds: &Aabb) -> RegionCover {
        let queries = std::cell::RefCell::new(Vec::new());
        let spheres = cover_region(
            bounds,
            |p, cap| {
                let r = map.cell_clearance(p, cap);
                queries.borrow_mut().push((*p, r));
                r
            },
            self.cfg.safety_radius,
            self.radius_cap(),
        );
        let reps = representatives(&spheres, &bounds.center(), &self.cfg);
        RegionCover {
            reps,
            queries: queries.into_inner(),
        }
    }

    /// Spheres covering one region of the current map.
    pub fn region_spheres(&self, map: &PointCloudMap, k: &VoxelKey) -> Vec<Sphere> {
        cover_region(
            &self.region_box(k),
            |p, cap| map.cell_clearance(p, cap),
            self.cfg.safety_radius,
            self.radius_cap(),
        )
    }

    fn add_vertex(&mut self, id: VertexId, position: Vec3, kind: VertexKind) {
        let region = self.region_key(&position);
        self.vertices.insert(
            id,
            Vertex {
                id,
                position,
                region,
                kind,
            },
        );
        self.adj.insert(id, BTreeSet::new());
    }

    fn remove_vertex(&mut self, id: VertexId) -> usize {
        let nbrs: Vec<VertexId> = self.neighbors(id).collect();
        for n in &nbrs {
            self.remove_edge(id, *n);
        }
        self.adj.remove(&id);
        self.vertices.remove(&id);
        nbrs.len()
    }

    fn insert_edge(&mut self, e: Edge) {
        self.adj.entry(e.a).or_default().insert(e.b);
        self.adj.entry(e.b).or_default().insert(e.a);
        self.edges.insert(pair(e.a, e.b), e);
    }

    fn remove_edge(&mut self, a: VertexId, b: VertexId) -> bool {
        if self.edges.remove(&pair(a, b)).is_some() {
            if let Some(s) = self.adj.get_mut(&a) {
                s.remove(&b);
            }
            if let Some(s) = self.adj.get_mut(&b) {
                s.remove(&a);
            }
            true
        } else {
            false
        }
    }

    /// Direct segment if clear, otherwise lattice search inside the box
    /// around both ends padded by one region.
    fn route(&mut self, map: &PointCloudMap, a: &Vec3, b: &Vec3) -> Option<(Vec<Vec3>, bool)> {
        if map.segment_cells_clear(a, b, self.cfg.safety_radius) {
            return Some((vec![*a, *b], false));
        }
        let scope = Aabb::from_points([a, b])
            .inflate(self.cfg.region_size)
            .intersection(&self.bounds);
        self.lattice.search(map, a, b, &scope).map(|p| (p, true))
    }

    fn try_edge(&mut self, map: &PointCloudMap, a: VertexId, b: VertexId) -> bool {
        if a == b || self.edges.contains_key(&pair(a, b)) {
            return false;
        }
        let (lo, hi) = pair(a, b);
        let pa = self.vertices[&lo].position;
        let pb = self.vertices[&hi].position;
        match self.route(map, &pa, &pb) {
            Some((path, routed)) => {
                self.insert_edge(Edge::new(lo, hi, path, routed));
                true
            }
            None => false,
        }
    }

    fn edge_still_valid(&mut self, map: &PointCloudMap, key: &(VertexId, VertexId)) -> bool {
        let e = &self.edges[key];
        if e.routed {
            let path = e.path.clone();
            self.lattice.route_valid(map, &path)
        } else {
            map.segment_cells_clear(&e.path[0], &e.path[1], self.cfg.safety_radius)
        }
    }

    fn neighborhood_vertices(&self, region: &VoxelKey, kinds: &[VertexKind]) -> Vec<VertexId> {
        let mut out = Vec::new();
        for k in region.block27() {
            if let Some(r) = self.regions.get(&k) {
                out.extend(r.vertices.iter().copied());
            }
        }
        if kinds.contains(&VertexKind::Odom) {
            if let Some(o) = self.vertices.get(&ODOM_ID) {
                if o.region.chebyshev(region) <= 1 {
                    out.push(ODOM_ID);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Links a single vertex to its surroundings: direct segments to every
    /// nearby vertex, and if none is clear, lattice routes tried nearest
    /// first until one succeeds.
    fn connect_nearby(&mut self, map: &PointCloudMap, id: VertexId, include_odom: bool) -> usize {
        let v = self.vertices[&id].clone();
        let kinds: &[VertexKind] = if include_odom {
            &[VertexKind::Regular, VertexKind::Odom]
        } else {
            &[VertexKind::Regular]
        };
        let mut cands: Vec<(f64, VertexId)> = self
            .neighborhood_vertices(&v.region, kinds)
            .into_iter()
            .filter(|u| *u != id)
            .map(|u| ((self.vertices[&u].position - v.position).norm(), u))
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut made = 0;
        for (_, u) in &cands {
            let pu = self.vertices[u].position;
            if map.segment_cells_clear(&v.position, &pu, self.cfg.safety_radius) {
                let (lo, hi) = pair(id, *u);
                let path = if lo == id { vec![v.position, pu] } else { vec![pu, v.position] };
                self.insert_edge(Edge::new(lo, hi, path, false));
                made += 1;
            }
        }
        if made == 0 {
            for (_, u) in &cands {
                if self.try_edge(map, id, *u) {
                    made = 1;
                    break;
                }
            }
        }
        made
    }

    fn init_region(&mut self, k: VoxelKey) -> bool {
        if self.regions.contains_key(&k) {
            return false;
        }
        let b = self.region_box(&k);
        if b.is_empty() || b.volume() <= 0.0 {
            return false;
        }
        self.regions.insert(
            k,
            Region {
                key: k,
                bounds: b,
                vertices: Vec::new(),
                queries: Vec::new(),
            },
        );
        true
    }

    /// Region keys crossed by the segment `a → b`, clipped to the bounds.
    pub fn regions_on_segment(&self, a: &Vec3, b: &Vec3) -> Vec<VoxelKey> {
        let d = b - a;
        let len = d.norm();
        let mut out = Vec::new();
        if len < 1e-12 {
            if self.bounds.contains(a) {
                out.push(self.region_key(a));
            }
            return out;
        }
        let dir = d / len;
        let Some((t0, t1)) = clip_ray(&self.bounds, a, &dir, len) else {
            return out;
        };
        let size = self.cfg.region_size;
        let start = a + dir * t0;
        let mut key = self.region_key(&clamp_into(&self.bounds, &start));
        let mut t_max = [0.0; 3];
        let mut t_delta = [f64::INFINITY; 3];
        let mut step = [0i32; 3];
        for i in 0..3 {
            let kk = [key.x, key.y, key.z][i];
            if dir[i] > 0.0 {
                step[i] = 1;
                let edge = self.bounds.min[i] + (kk + 1) as f64 * size;
                t_max[i] = t0 + (edge - start[i]) / dir[i];
                t_delta[i] = size / dir[i];
            } else if dir[i] < 0.0 {
                step[i] = -1;
                let edge = self.bounds.min[i] + kk as f64 * size;
                t_max[i] = t0 + (edge - start[i]) / dir[i];
                t_delta[i] = -size / dir[i];
            } else {
                t_max[i] = f64::INFINITY;
            }
        }
        out.push(key);
        loop {
            let i = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            if t_max[i] > t1 {
                break;
            }
            match i {
                0 => key.x += step[0],
                1 => key.y += step[1],
                _ => key.z += step[2],
            }
            t_max[i] += t_delta[i];
            if self.region_box(&key).is_empty() {
                break;
            }
            out.push(key);
        }
        out
    }

    /// Brings the graph up to date after a frame.
    ///
    /// `ray_ends` are the far ends of the frame's beams (hit or max range);
    /// `new_cells` are the map cells that became occupied this frame.
    pub fn update(
        &mut self,
        map: &PointCloudMap,
        sensor: &Vec3,
        ray_ends: &[Vec3],
        new_cells: &[VoxelKey],
        uav: &Vec3,
        mode: ExecMode,
    ) -> TopoFrameStats {
        let mut stats = TopoFrameStats::default();
        let cell_boxes: Vec<Aabb> = new_cells.iter().map(|k| map.cell_box(k)).collect();
        self.lattice.invalidate(cell_boxes.iter().copied());

        // regions whose cover may change
        let mut todo: BTreeSet<VoxelKey> = self.changed_regions(map, &cell_boxes);

        // regions seen for the first time
        if self.bounds.contains(sensor) && self.init_region(self.region_key(sensor)) {
            todo.insert(self.region_key(sensor));
            stats.regions_initialized += 1;
        }
        let mut fresh = Vec::new();
        for end in ray_ends {
            for k in self.regions_on_segment(sensor, end) {
                if !self.regions.contains_key(&k) && self.init_region(k) {
                    fresh.push(k);
                }
            }
        }
        stats.regions_initialized += fresh.len();
        todo.extend(fresh);

        self.apply_region_updates(map, todo, &cell_boxes, mode, &mut stats);
        self.refresh_odom(map, uav);
        stats
    }

    fn changed_regions(&self, map: &PointCloudMap, cell_boxes: &[Aabb]) -> BTreeSet<VoxelKey> {
        let mut out = BTreeSet::new();
        if cell_boxes.is_empty() {
            return out;
        }
        // bucket new cells by map block for ball queries
        let mut buckets: FxHashMap<VoxelKey, Vec<Aabb>> = FxHashMap::default();
        let bsize = map.cell_size() * crate::pcmap::BLOCK as f64;
        let mut candidates = BTreeSet::new();
        let cap = self.radius_cap();
        for b in cell_boxes {
            buckets
                .entry(VoxelKey::from_point(&b.center(), &Vec3::zeros(), bsize))
                .or_default()
                .push(*b);
            let g = b.inflate(cap);
            let lo = self.region_key(&g.min);
            let hi = self.region_key(&g.max);
            for x in lo.x..=hi.x {
                for y in lo.y..=hi.y {
                    for z in lo.z..=hi.z {
                        candidates.insert(VoxelKey::new(x, y, z));
                    }
                }
            }
        }
        let cell = map.cell_size();
        for k in candidates {
            let Some(r) = self.regions.get(&k) else {
                continue;
            };
            let hit = r.queries.iter().any(|(q, rad)| {
                let reach = rad + cell;
                let lo = VoxelKey::from_point(&(q - Vec3::repeat(reach)), &Vec3::zeros(), bsize);
                let hi = VoxelKey::from_point(&(q + Vec3::repeat(reach)), &Vec3::zeros(), bsize);
                for x in lo.x..=hi.x {
                    for y in lo.y..=hi.y {
                        for z in lo.z..=hi.z {
                            if let Some(bs) = buckets.get(&VoxelKey::new(x, y, z)) {
                                if bs.iter().any(|b| b.distance_to_point(q) < *rad) {
                                    return true;
                                }
                            }
                        }
                    }
                }
                false
            });
            if hit || r.queries.is_empty() {
                out.insert(k);
            }
        }
        out
    }

    fn apply_region_updates(
        &mut self,
        map: &PointCloudMap,
        todo: BTreeSet<VoxelKey>,
        cell_boxes: &[Aabb],
        mode: ExecMode,
        stats: &mut TopoFrameStats,
    ) {
        let keys: Vec<VoxelKey> = todo.into_iter().collect();
        let boxes: Vec<Aabb> = keys.iter().map(|k| self.regions[k].bounds).collect();
        let covers = exec::map_slice(mode, &boxes, |b| self.cover(map, b));
        stats.regions_updated = keys.len();

        let mut removed = Vec::new();
        let mut touched_vertices = Vec::new();
        for (k, cov) in keys.iter().zip(covers) {
            let pre: Vec<VertexId> = self.regions[k].vertices.clone();
            let mut unmatched: Vec<VertexId> = pre.clone();
            let mut new_ids = Vec::with_capacity(cov.reps.len());
            for p in &cov.reps {
                let best = unmatched
                    .iter()
                    .enumerate()
                    .map(|(i, id)| (i, (self.vertices[id].position - p).norm()))
                    .filter(|(_, d)| *d <= self.cfg.vertex_match_tol)
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                match best {
                    Some((i, d)) => {
                        let id = unmatched.remove(i);
                        if d > 0.0 {
                            self.vertices.get_mut(&id).unwrap().position = *p;
                            touched_vertices.push(id);
                        }
                        new_ids.push(id);
                    }
                    None => {
                        let id = self.next_id;
                        self.next_id += 1;
                        self.add_vertex(id, *p, VertexKind::Regular);
                        self.vertices.get_mut(&id).unwrap().region = *k;
                        touched_vertices.push(id);
                        new_ids.push(id);
                        stats.inserted += 1;
                    }
                }
            }
            let pre_set: BTreeSet<_> = pre.iter().copied().collect();
            let new_set: BTreeSet<_> = new_ids.iter().copied().collect();
            let (rm, remain, _) = categorize_vertices(&pre_set, &new_set);
            stats.removed += rm.len();
            stats.remained += remain.len();
            removed.extend(rm);
            let r = self.regions.get_mut(k).unwrap();
            r.vertices = new_ids;
            r.queries = cov.queries;
        }

        for id in removed {
            stats.edges_removed += self.remove_vertex(id);
        }
        let mut queue: BTreeSet<(VertexId, VertexId)> = BTreeSet::new();
        for id in &touched_vertices {
            let nbrs: Vec<VertexId> = self.neighbors(*id).collect();
            for n in nbrs {
                if self.remove_edge(*id, n) {
                    stats.edges_removed += 1;
                }
            }
        }

        // edges that pass near new cells
        if !cell_boxes.is_empty() {
            let margin = self.lattice.node_margin() + map.cell_size();
            let mut dirty: FxHashSet<VoxelKey> = FxHashSet::default();
            for b in cell_boxes {
                let g = b.inflate(margin);
                let lo = self.region_key(&g.min);
                let hi = self.region_key(&g.max);
                for x in lo.x..=hi.x {
                    for y in lo.y..=hi.y {
                        for z in lo.z..=hi.z {
                            dirty.insert(VoxelKey::new(x, y, z));
                        }
                    }
                }
            }
            let suspects: Vec<(VertexId, VertexId)> = self
                .edges
                .iter()
                .filter(|(key, _)| key.0 != ODOM_ID)
                .filter(|(_, e)| {
                    let lo = self.region_key(&e.bbox.min);
                    let hi = self.region_key(&e.bbox.max);
                    (lo.x..=hi.x).any(|x| {
                        (lo.y..=hi.y).any(|y| (lo.z..=hi.z).any(|z| dirty.contains(&VoxelKey::new(x, y, z))))
                    })
                })
                .map(|(k, _)| *k)
                .collect();
            for key in suspects {
                stats.edges_rechecked += 1;
                if !self.edge_still_valid(map, &key) {
                    self.remove_edge(key.0, key.1);
                    stats.edges_removed += 1;
                    queue.insert(key);
                }
            }
        }

        for id in &touched_vertices {
            let region = self.vertices[id].region;
            for u in self.neighborhood_vertices(&region, &[VertexKind::Regular]) {
                if u != *id {
                    queue.insert(pair(*id, u));
                }
            }
        }
        for (a, b) in queue {
            if !self.vertices.contains_key(&a) || !self.vertices.contains_key(&b) {
                continue;
            }
            if self.edges.contains_key(&(a, b)) {
                continue;
            }
            stats.pairs_searched += 1;
            if self.try_edge(map, a, b) {
                stats.edges_added += 1;
            }
        }
    }

    fn refresh_odom(&mut self, map: &PointCloudMap, uav: &Vec3) {
        if self.vertices.contains_key(&ODOM_ID) {
            self.remove_vertex(ODOM_ID);
        }
        if !self.bounds.contains(uav) {
            return;
        }
        self.add_vertex(ODOM_ID, *uav, VertexKind::Odom);
        self.connect_nearby(map, ODOM_ID, false);
    }

    /// Moves the odometry vertex without touching the rest of the graph.
    pub fn set_odom(&mut self, map: &PointCloudMap, uav: &Vec3) {
        self.refresh_odom(map, uav);
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            next_id: self.next_id,
        }
    }

    /// Removes every vertex created after `cp`, with its edges.
    pub fn rollback(&mut self, cp: Checkpoint) {
        let ids: Vec<VertexId> = self.vertices.range(cp.next_id..).map(|(id, _)| *id).collect();
        for id in ids {
            self.remove_vertex(id);
        }
        self.next_id = cp.next_id;
    }

    /// Adds a temporary vertex at `p` linked to nearby vertices (including
    /// the odometry vertex). Undo with [`rollback`](Self::rollback).
    pub fn connect_temp_vertex(&mut self, map: &PointCloudMap, p: &Vec3) -> Result<(VertexId, Checkpoint), TopoError> {
        let cp = self.checkpoint();
        if !self.bounds.contains(p) {
            return Err(TopoError::OutOfBounds([p.x, p.y, p.z]));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.add_vertex(id, *p, VertexKind::ViewpointTemp);
        if self.connect_nearby(map, id, true) == 0 {
            self.rollback(cp);
            return Err(TopoError::NoConnection([p.x, p.y, p.z]));
        }
        Ok((id, cp))
    }

    /// A* over the graph with a Euclidean heuristic. Returns the vertex
    /// sequence (empty when `start == goal`) and its total edge length.
    pub fn graph_astar(&self, start: VertexId, goal: VertexId) -> Option<(Vec<VertexId>, f64)> {
        if !self.vertices.contains_key(&start) || !self.vertices.contains_key(&goal) {
            return None;
        }
        if start == goal {
            return Some((Vec::new(), 0.0));
        }
        let gp = self.vertices[&goal].position;
        let h = |v: VertexId| (self.vertices[&v].position - gp).norm();
        let mut g: FxHashMap<VertexId, (f64, VertexId)> = FxHashMap::default();
        let mut closed = FxHashSet::default();
        let mut open = BinaryHeap::new();
        g.insert(start, (0.0, start));
        open.push(Reverse((h(start).to_bits(), start)));
        while let Some(Reverse((_, v))) = open.pop() {
            if v == goal {
                let mut seq = vec![goal];
                let mut cur = goal;
                while cur != start {
                    cur = g[&cur].1;
                    seq.push(cur);
                }
                seq.reverse();
                return Some((seq, g[&goal].0));
            }
            if !closed.insert(v) {
                continue;
            }
            let gv = g[&v].0;
            for n in self.neighbors(v) {
                if closed.contains(&n) {
                    continue;
                }
                let ng = gv + self.edges[&pair(v, n)].length;
                if g.get(&n).is_none_or(|(og, _)| ng < *og) {
                    g.insert(n, (ng, v));
                    open.push(Reverse(((ng + h(n)).to_bits(), n)));
                }
            }
        }
        None
    }

    /// Concatenated stored edge paths along a vertex sequence.
    pub fn stitch(&self, seq: &[VertexId]) -> Vec<Vec3> {
        let mut out: Vec<Vec3> = Vec::new();
        if let Some(first) = seq.first() {
            out.push(self.vertices[first].position);
        }
        for w in seq.windows(2) {
            let e = &self.edges[&pair(w[0], w[1])];
            out.extend(e.path_from(w[0]).into_iter().skip(1));
        }
        out
    }

    /// Every stored edge passes the point-level segment test at the safety
    /// radius against `map`.
    pub fn edges_valid(&self, map: &PointCloudMap) -> Vec<(VertexId, VertexId)> {
        self.edges
            .iter()
            .filter(|(_, e)| {
                !e.path
                    .windows(2)
                    .all(|w| map.segment_clear(&w[0], &w[1], self.cfg.safety_radius - 1e-9))
            })
            .map(|(k, _)| *k)
            .collect()
    }

    /// A graph built from scratch over the same regions and map, without
    /// an odometry vertex.
    pub fn rebuilt(&self, map: &PointCloudMap, mode: ExecMode) -> TopoGraph {
        let mut g = TopoGraph::new(self.cfg.clone(), self.bounds);
        for k in self.regions.keys() {
            g.init_region(*k);
        }
        let keys: Vec<VoxelKey> = g.regions.keys().copied().collect();
        let boxes: Vec<Aabb> = keys.iter().map(|k| g.regions[k].bounds).collect();
        let covers = exec::map_slice(mode, &boxes, |b| g.cover(map, b));
        for (k, cov) in keys.iter().zip(covers) {
            let mut ids = Vec::new();
            for p in cov.reps {
                let id = g.next_id;
                g.next_id += 1;
                g.add_vertex(id, p, VertexKind::Regular);
                g.vertices.get_mut(&id).unwrap().region = *k;
                ids.push(id);
            }
            let r = g.regions.get_mut(k).unwrap();
            r.vertices = ids;
            r.queries = cov.queries;
        }
        let mut queue = BTreeSet::new();
        for v in g.vertices.values() {
            for u in g.neighborhood_vertices(&v.region, &[VertexKind::Regular]) {
                if u != v.id {
                    queue.insert(pair(u, v.id));
                }
            }
        }
        for (a, b) in queue {
            g.try_edge(map, a, b);
        }
        g
    }

    /// Connected components of regular vertices (edges among regular
    /// vertices only), each given as sorted position bit patterns.
    pub fn regular_components(&self) -> Vec<Vec<[u64; 3]>> {
        let ids: Vec<VertexId> = self
            .vertices
            .values()
            .filter(|v| v.kind == VertexKind::Regular)
            .map(|v| v.id)
            .collect();
        let index: FxHashMap<VertexId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut uf = UnionFind::new(ids.len());
        for (a, b) in self.edges.keys() {
            if let (Some(i), Some(j)) = (index.get(a), index.get(b)) {
                uf.union(*i, *j);
            }
        }
        let mut comps: Vec<Vec<[u64; 3]>> = uf
            .groups()
            .into_iter()
            .map(|g| {
                let mut c: Vec<[u64; 3]> = g
                    .iter()
                    .map(|i| {
                        let p = self.vertices[&ids[*i]].position;
                        [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]
                    })
                    .collect();
                c.sort_unstable();
                c
            })
            .collect();
        comps.sort_unstable();
        comps
    }
}

/// One representative per sphere cluster: the member centre closest to the
/// region centre.
fn representatives(spheres: &[Sphere], center: &Vec3, cfg: &TopoConfig) -> Vec<Vec3> {
    cluster_spheres(spheres, cfg.safety_radius, cfg.overlap)
        .into_iter()
        .map(|g| {
            let best = g
                .iter()
                .min_by(|a, b| {
                    let da = (spheres[**a].center - center).norm();
                    let db = (spheres[**b].center - center).norm();
                    da.total_cmp(&db).then(a.cmp(b))
                })
                .expect("non-empty group");
            spheres[*best].center
        })
        .collect()
}

/// Parameter interval of the ray `a + t·dir`, `t ∈ [0, len]`, inside `b`.
fn clip_ray(b: &Aabb, a: &Vec3, dir: &Vec3, len: f64) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0_f64, len);
    for i in 0..3 {
        if dir[i].abs() < 1e-300 {
            if a[i] < b.min[i] || a[i] > b.max[i] {
                return None;
            }
            continue;
        }
        let (mut lo, mut hi) = ((b.min[i] - a[i]) / dir[i], (b.max[i] - a[i]) / dir[i]);
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

fn clamp_into(b: &Aabb, p: &Vec3) -> Vec3 {
    let eps = 1e-9;
    Vec3::new(
        p.x.clamp(b.min.x, b.max.x - eps),
        p.y.clamp(b.min.y, b.max.y - eps),
        p.z.clamp(b.min.z, b.max.z - eps),
    )
}
