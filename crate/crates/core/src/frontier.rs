//! Frontier detection on the observation map and normal-aware clustering of
//! frontier voxels, re-clustered incrementally around each frame's changes.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{Matrix3, SymmetricEigen};
use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;

use crate::config::ClusterConfig;
use crate::geom::{Aabb, Vec3, VoxelKey};
use crate::obsmap::{Label, ObsUpdate, ObservationMap};
use crate::pcmap::PointCloudMap;

/// Best-fit plane normal of the map points within `radius` of `center`,
/// flipped to face `sensor`. Falls back to the direction towards the sensor
/// when fewer than three points are available.
pub fn estimate_normal(map: &PointCloudMap, center: &Vec3, radius: f64, sensor: &Vec3) -> Vec3 {
    let mut pts = Vec::new();
    map.for_points_within(center, radius, |p| pts.push(*p));
    let towards = sensor - center;
    let fallback = if towards.norm() > 1e-12 {
        towards.normalize()
    } else {
        Vec3::z()
    };
    if pts.len() < 3 {
        return fallback;
    }
    let mean = pts.iter().sum::<Vec3>() / pts.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in &pts {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let i = eig.eigenvalues.imin();
    let mut n: Vec3 = eig.eigenvectors.column(i).into_owned();
    if !(n.norm() > 0.0) || !n.iter().all(|v| v.is_finite()) {
        return fallback;
    }
    n.normalize_mut();
    if n.dot(&towards) < 0.0 {
        n = -n;
    }
    n
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrontierChanges {
    pub added: Vec<VoxelKey>,
    pub removed: Vec<VoxelKey>,
    pub b_update: Aabb,
}

impl FrontierChanges {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }
}

/// Promotes poorly observed voxels next to well-observed ones to frontier.
///
/// Candidates are the frame's poorly observed voxels plus poorly observed
/// neighbours of voxels promoted to well observed this frame; the latter can
/// gain a well neighbour without being hit themselves.
pub fn detect_frontiers(
    obs: &mut ObservationMap,
    update: &ObsUpdate,
    pc: &PointCloudMap,
    sensor: &Vec3,
    cfg: &ClusterConfig,
) -> FrontierChanges {
    let mut out = FrontierChanges {
        b_update: Aabb::empty(),
        ..Default::default()
    };
    for (k, was_frontier) in &update.became_well {
        if *was_frontier {
            out.removed.push(*k);
        }
    }
    let mut seen = FxHashSet::default();
    let mut candidates = Vec::new();
    for k in &update.queue {
        if obs.label(k) == Some(Label::Poorly) && seen.insert(*k) {
            candidates.push(*k);
        }
    }
    for (k, _) in &update.became_well {
        for n in k.neighbors26() {
            if obs.label(&n) == Some(Label::Poorly) && seen.insert(n) {
                candidates.push(n);
            }
        }
    }
    let radius = cfg.normal_radius_factor * obs.res();
    for k in candidates {
        if obs.has_well_neighbor(&k) {
            let c = obs.center(&k);
            let n = estimate_normal(pc, &c, radius, sensor);
            obs.set_frontier(k, n);
            out.added.push(k);
        }
    }
    for k in out.added.iter().chain(&out.removed) {
        out.b_update = out.b_update.union(&obs.voxel_box(k));
    }
    out
}

/// Distance and normal-similarity predicate between two frontier voxels.
pub fn neighbors(p_i: &Vec3, n_i: &Vec3, p_j: &Vec3, n_j: &Vec3, cfg: &ClusterConfig) -> bool {
    (p_i - p_j).norm() < cfg.eps_d && n_i.dot(n_j) > cfg.eps_n
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrontierVoxel {
    pub key: VoxelKey,
    pub center: Vec3,
    pub normal: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrontierCluster {
    pub id: u64,
    pub voxels: Vec<FrontierVoxel>,
    pub centroid: Vec3,
    pub aabb: Aabb,
    pub gen_pose: Vec3,
    pub gen_odometer: f64,
}

fn voxel_box(v: &FrontierVoxel, res: f64) -> Aabb {
    Aabb::new(v.center, v.center).inflate(res * 0.5)
}

/// Lattice offsets whose centre spacing can be below `eps_d`.
fn ball_offsets(eps_d: f64, res: f64) -> Vec<(i32, i32, i32)> {
    let r = (eps_d / res).ceil() as i32;
    let mut out = Vec::new();
    for dx in -r..=r {
        for dy in -r..=r {
            for dz in -r..=r {
                let d2 = (dx * dx + dy * dy + dz * dz) as f64 * res * res;
                if d2 < eps_d * eps_d {
                    out.push((dx, dy, dz));
                }
            }
        }
    }
    out
}

/// BFS clustering in seeding order. A cluster stops growing as soon as
/// absorbing the next neighbour would push its box past the size cap; the
/// rejected voxel seeds a later cluster.
pub fn cluster_frontiers(input: &[FrontierVoxel], cfg: &ClusterConfig, res: f64) -> Vec<Vec<FrontierVoxel>> {
    let offsets = ball_offsets(cfg.eps_d, res);
    let mut remaining: FxHashMap<VoxelKey, usize> =
        input.iter().enumerate().map(|(i, v)| (v.key, i)).collect();
    let mut clusters = Vec::new();
    for seed in input {
        if !remaining.contains_key(&seed.key) {
            continue;
        }
        remaining.remove(&seed.key);
        let mut members = vec![*seed];
        let mut aabb = voxel_box(seed, res);
        let mut queue = VecDeque::from([*seed]);
        'bfs: while let Some(cur) = queue.pop_front() {
            for &(dx, dy, dz) in &offsets {
                let k = cur.key.offset(dx, dy, dz);
                let Some(&idx) = remaining.get(&k) else {
                    continue;
                };
                let cand = &input[idx];
                if !neighbors(&cur.center, &cur.normal, &cand.center, &cand.normal, cfg) {
                    continue;
                }
                let grown = aabb.union(&voxel_box(cand, res));
                if grown.extent().max() > cfg.cluster_aabb_max + 1e-9 {
                    break 'bfs;
                }
                aabb = grown;
                remaining.remove(&k);
                members.push(*cand);
                queue.push_back(*cand);
            }
        }
        clusters.push(members);
    }
    clusters
}

/// Owns the cluster list and per-voxel bookkeeping for unreachable or
/// unobservable frontiers.
#[derive(Clone, Debug)]
pub struct FrontierManager {
    cfg: ClusterConfig,
    res: f64,
    clusters: BTreeMap<u64, FrontierCluster>,
    next_id: u64,
    defers: FxHashMap<VoxelKey, u32>,
    visits: FxHashMap<VoxelKey, u32>,
}

impl FrontierManager {
    pub fn new(cfg: ClusterConfig, res: f64) -> Self {
        Self {
            cfg,
            res,
            clusters: BTreeMap::new(),
            next_id: 1,
            defers: FxHashMap::default(),
            visits: FxHashMap::default(),
        }
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.cfg
    }

    pub fn clusters(&self) -> impl Iterator<Item = &FrontierCluster> {
        self.clusters.values()
    }

    pub fn cluster(&self, id: u64) -> Option<&FrontierCluster> {
        self.clusters.get(&id)
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn frontier_voxel_count(&self) -> usize {
        self.clusters.values().map(|c| c.voxels.len()).sum()
    }

    fn build(&mut self, voxels: Vec<FrontierVoxel>, gen_pose: Vec3, odometer: f64) -> FrontierCluster {
        let centroid = voxels.iter().map(|v| v.center).sum::<Vec3>() / voxels.len() as f64;
        let aabb = voxels
            .iter()
            .fold(Aabb::empty(), |b, v| b.union(&voxel_box(v, self.res)));
        let id = self.next_id;
        self.next_id += 1;
        FrontierCluster {
            id,
            voxels,
            centroid,
            aabb,
            gen_pose,
            gen_odometer: odometer,
        }
    }

    /// Dissolves clusters near the changed area and re-clusters their
    /// surviving voxels together with the new frontiers. The change box is
    /// grown by `eps_d` so that a new frontier just outside a cluster's box
    /// can still join it.
    pub fn incremental_recluster(
        &mut self,
        obs: &ObservationMap,
        changes: &FrontierChanges,
        uav: &Vec3,
        odometer: f64,
    ) -> Vec<u64> {
        if changes.b_update.is_empty() {
            return Vec::new();
        }
        let zone = changes.b_update.inflate(self.cfg.eps_d);
        let hit: Vec<u64> = self
            .clusters
            .values()
            .filter(|c| c.aabb.intersects(&zone))
            .map(|c| c.id)
            .collect();
        let mut pool = Vec::new();
        let mut in_pool = FxHashSet::default();
        for id in &hit {
            let c = self.clusters.remove(id).expect("cluster exists");
            for v in c.voxels {
                if obs.label(&v.key) == Some(Label::Frontier) && in_pool.insert(v.key) {
                    pool.push(v);
                }
            }
        }
        for k in &changes.added {
            if obs.label(k) == Some(Label::Frontier) && in_pool.insert(*k) {
                pool.push(FrontierVoxel {
                    key: *k,
                    center: obs.center(k),
                    normal: *obs.normal(k).expect("frontier has a normal"),
                });
            }
        }
        for k in &changes.removed {
            self.defers.remove(k);
            self.visits.remove(k);
        }
        let groups = cluster_frontiers(&pool, &self.cfg, self.res);
        let mut ids = Vec::new();
        for g in groups {
            let c = self.build(g, *uav, odometer);
            ids.push(c.id);
            self.clusters.insert(c.id, c);
        }
        ids
    }

    fn bump(map: &mut FxHashMap<VoxelKey, u32>, c: &FrontierCluster) {
        for v in &c.voxels {
            *map.entry(v.key).or_insert(0) += 1;
        }
    }

    fn min_count(map: &FxHashMap<VoxelKey, u32>, c: &FrontierCluster) -> u32 {
        c.voxels
            .iter()
            .map(|v| map.get(&v.key).copied().unwrap_or(0))
            .min()
            .unwrap_or(0)
    }

    /// Records that no reachable viewpoint was found for the cluster.
    pub fn mark_deferred(&mut self, id: u64) {
        if let Some(c) = self.clusters.get(&id) {
            Self::bump(&mut self.defers, c);
        }
    }

    /// Records that the UAV arrived at a viewpoint chosen for the cluster.
    pub fn mark_visited(&mut self, id: u64) {
        if let Some(c) = self.clusters.get(&id) {
            Self::bump(&mut self.visits, c);
        }
    }

    pub fn defer_count(&self, id: u64) -> u32 {
        self.clusters
            .get(&id)
            .map(|c| Self::min_count(&self.defers, c))
            .unwrap_or(0)
    }

    pub fn visit_count(&self, id: u64) -> u32 {
        self.clusters
            .get(&id)
            .map(|c| Self::min_count(&self.visits, c))
            .unwrap_or(0)
    }

    /// A cluster is quarantined once every one of its voxels has been
    /// deferred `max_defer` times or visited `max_visits` times.
    pub fn is_quarantined(&self, id: u64, max_defer: u32, max_visits: u32) -> bool {
        self.defer_count(id) >= max_defer || self.visit_count(id) >= max_visits
    }

    pub fn active_ids(&self, max_defer: u32, max_visits: u32) -> Vec<u64> {
        self.clusters
            .keys()
            .copied()
            .filter(|id| !self.is_quarantined(*id, max_defer, max_visits))
            .collect()
    }
}
