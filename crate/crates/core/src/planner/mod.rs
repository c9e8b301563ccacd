//! Hierarchical global planning: coarse ranking of frontier clusters by
//! backtracking distance, viewpoint selection for the leading clusters and
//! an open tour through the selected viewpoints.

pub mod atsp;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Instant;

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::config::Config;
use crate::exec::{self, ExecMode};
use crate::frontier::{FrontierCluster, FrontierManager, FrontierVoxel};
use crate::geom::{polyline_length, wrap_angle, Aabb, Vec3};
use crate::pcmap::PointCloudMap;
use crate::topo::cover::{cluster_spheres, Sphere};
use crate::topo::{TopoGraph, VertexId, ODOM_ID};
use crate::world::{LidarModel, Pose};

/// Flight distance record. The newest sample always holds the current
/// position and total; older samples are kept every `spacing` metres.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlightLog {
    samples: Vec<(Vec3, f64)>,
    spacing: f64,
    total: f64,
    position: Vec3,
}

impl FlightLog {
    pub fn new(start: Vec3, spacing: f64) -> Self {
        Self {
            samples: vec![(start, 0.0)],
            spacing,
            total: 0.0,
            position: start,
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn samples(&self) -> &[(Vec3, f64)] {
        &self.samples
    }

    /// Appends motion to `p`.
    pub fn record(&mut self, p: Vec3) {
        let d = (p - self.position).norm();
        if d == 0.0 {
            return;
        }
        self.total += d;
        self.position = p;
        let n = self.samples.len();
        let anchor = if n >= 2 { self.samples[n - 2].1 } else { 0.0 };
        if n >= 2 && self.total - anchor < self.spacing {
            self.samples[n - 1] = (p, self.total);
        } else {
            self.samples.push((p, self.total));
        }
    }
}

/// Flight distance since the cluster appeared plus the straight-line
/// distance from where it appeared to its centroid. Constant time.
pub fn backtracking_distance(c: &FrontierCluster, log: &FlightLog) -> f64 {
    (log.total() - c.gen_odometer) + (c.gen_pose - c.centroid).norm()
}

/// Cluster ids ascending by backtracking distance, ties by id.
pub fn rank_clusters<'a>(clusters: impl IntoIterator<Item = &'a FrontierCluster>, log: &FlightLog) -> Vec<u64> {
    let mut v: Vec<(f64, u64)> = clusters
        .into_iter()
        .map(|c| (backtracking_distance(c, log), c.id))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    v.into_iter().map(|(_, id)| id).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Viewpoint {
    pub position: Vec3,
    pub yaw: f64,
    pub coverage: u32,
    pub cluster_id: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Candidate {
    pub sphere: Sphere,
}

/// Cylindrical lattice around the centroid, keeping samples with at least
/// `safety` clearance inside the bounds shrunk by `safety`, grouped by
/// sphere connectivity.
pub fn sample_viewpoints(c: &FrontierCluster, map: &PointCloudMap, bounds: &Aabb, cfg: &Config) -> Vec<Vec<Candidate>> {
    let safety = cfg.topo.safety_radius;
    let inner = bounds.inflate(-safety);
    let cap = cfg.topo.effective_radius_cap();
    let mut spheres = Vec::new();
    for &r in &cfg.planner.vp_radii {
        for k in 0..cfg.planner.vp_azimuths {
            let a = std::f64::consts::TAU * k as f64 / cfg.planner.vp_azimuths as f64;
            for &h in &cfg.planner.vp_heights {
                let p = c.centroid + Vec3::new(r * a.cos(), r * a.sin(), h);
                if !inner.contains(&p) {
                    continue;
                }
                let d = map.cell_clearance(&p, cap);
                if d >= safety {
                    spheres.push(Sphere { center: p, radius: d });
                }
            }
        }
    }
    cluster_spheres(&spheres, safety, cfg.topo.overlap)
        .into_iter()
        .map(|g| g.into_iter().map(|i| Candidate { sphere: spheres[i] }).collect())
        .collect()
}

/// Up to `n` frontier voxels spread evenly over the cluster.
pub fn scoring_sample(c: &FrontierCluster, n: usize) -> Vec<FrontierVoxel> {
    let m = c.voxels.len();
    if m <= n || n == 0 {
        return c.voxels.clone();
    }
    (0..n).map(|i| c.voxels[i * m / n]).collect()
}

/// Yaw angle of sample `i`.
pub fn yaw_sample(i: usize, n: usize) -> f64 {
    wrap_angle(-std::f64::consts::PI + std::f64::consts::TAU * i as f64 / n as f64)
}

/// Whether `f` passes the yaw-independent tests from `vp`.
pub fn frontier_visible(vp: &Vec3, f: &FrontierVoxel, map: &PointCloudMap, cfg: &Config) -> bool {
    let to_vp = vp - f.center;
    let dist = to_vp.norm();
    if !(dist < cfg.obs.max_distance) || dist == 0.0 {
        return false;
    }
    let cos_t = cfg.planner.normal_angle_deg.to_radians().cos();
    if to_vp.dot(&f.normal) / dist <= cos_t {
        return false;
    }
    let trim = 2.0 * cfg.obs.res;
    if dist <= trim {
        return true;
    }
    let end = f.center + to_vp * (trim / dist);
    map.segment_clear(vp, &end, cfg.obs.res * 0.5)
}

/// Per-yaw counts of frontiers that pass all tests, for `yaw_samples`
/// evenly spaced yaws starting at −π.
pub fn coverage_by_yaw(vp: &Vec3, frontiers: &[FrontierVoxel], map: &PointCloudMap, lidar: &LidarModel, cfg: &Config) -> Vec<u32> {
    let visible: Vec<&FrontierVoxel> = frontiers
        .iter()
        .filter(|f| frontier_visible(vp, f, map, cfg))
        .collect();
    let n = cfg.planner.yaw_samples;
    (0..n)
        .map(|i| {
            let pose = Pose::new(*vp, yaw_sample(i, n));
            visible.iter().filter(|f| lidar.in_fov(&pose, &f.center)).count() as u32
        })
        .collect()
}

/// Best yaw and its count; ties go to the smallest yaw.
pub fn coverage_score(vp: &Vec3, frontiers: &[FrontierVoxel], map: &PointCloudMap, lidar: &LidarModel, cfg: &Config) -> (f64, u32) {
    let counts = coverage_by_yaw(vp, frontiers, map, lidar, cfg);
    let mut best = (yaw_sample(0, counts.len()), 0);
    for (i, c) in counts.iter().enumerate() {
        if *c > best.1 {
            best = (yaw_sample(i, counts.len()), *c);
        }
    }
    best
}

/// Picks the best reachable viewpoint for a cluster, or `None` when no
/// candidate group can be reached from the odometry vertex or nothing can
/// be observed. The graph is left exactly as it was.
pub fn select_viewpoint(
    c: &FrontierCluster,
    graph: &mut TopoGraph,
    map: &PointCloudMap,
    lidar: &LidarModel,
    cfg: &Config,
    mode: ExecMode,
) -> Option<Viewpoint> {
    graph.odom()?;
    let groups = sample_viewpoints(c, map, graph.bounds(), cfg);
    let mut members: Vec<Vec3> = Vec::new();
    for g in &groups {
        let rep = g
            .iter()
            .min_by(|a, b| {
                b.sphere
                    .radius
                    .total_cmp(&a.sphere.radius)
                    .then_with(|| {
                        let da = (a.sphere.center - c.centroid).norm();
                        let db = (b.sphere.center - c.centroid).norm();
                        da.total_cmp(&db)
                    })
            })
            .expect("group is non-empty");
        let reachable = match graph.connect_temp_vertex(map, &rep.sphere.center) {
            Ok((id, cp)) => {
                let ok = graph.graph_astar(ODOM_ID, id).is_some();
                graph.rollback(cp);
                ok
            }
            Err(_) => false,
        };
        if reachable {
            members.extend(g.iter().map(|m| m.sphere.center));
        }
    }
    if members.is_empty() {
        return None;
    }
    let sample = scoring_sample(c, cfg.planner.score_samples);
    let scores = exec::map_slice(mode, &members, |p| coverage_score(p, &sample, map, lidar, cfg));
    let mut best: Option<Viewpoint> = None;
    for (p, (yaw, s)) in members.iter().zip(scores) {
        if s > 0 && best.is_none_or(|b| s > b.coverage) {
            best = Some(Viewpoint {
                position: *p,
                yaw,
                coverage: s,
                cluster_id: c.id,
            });
        }
    }
    best
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GuidancePath {
    /// Viewpoints in visiting order.
    pub viewpoints: Vec<Viewpoint>,
    pub polyline: Vec<Vec3>,
    pub length: f64,
    /// Index into `polyline` where each viewpoint is reached.
    pub arrivals: Vec<usize>,
    /// Clusters whose viewpoint could not be connected or reached.
    pub excluded: Vec<u64>,
}

impl GuidancePath {
    pub fn is_empty(&self) -> bool {
        self.viewpoints.is_empty()
    }
}

/// Single-source shortest path lengths to `targets`.
fn distances_from(graph: &TopoGraph, src: VertexId, targets: &[VertexId]) -> Vec<f64> {
    let mut dist: FxHashMap<VertexId, f64> = FxHashMap::default();
    let mut heap = BinaryHeap::new();
    dist.insert(src, 0.0);
    heap.push(Reverse((0f64.to_bits(), src)));
    let mut left: rustc_hash::FxHashSet<VertexId> = targets.iter().copied().collect();
    left.remove(&src);
    while let Some(Reverse((db, v))) = heap.pop() {
        let d = f64::from_bits(db);
        if d > dist[&v] {
            continue;
        }
        left.remove(&v);
        if left.is_empty() {
            break;
        }
        for n in graph.neighbors(v) {
            let nd = d + graph.edge(v, n).expect("adjacent").length;
            if dist.get(&n).is_none_or(|o| nd < *o) {
                dist.insert(n, nd);
                heap.push(Reverse((nd.to_bits(), n)));
            }
        }
    }
    targets
        .iter()
        .map(|t| if *t == src { 0.0 } else { dist.get(t).copied().unwrap_or(f64::INFINITY) })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TourTiming {
    pub matrix_ms: f64,
    pub solve_ms: f64,
}

/// Open tour from the odometry vertex through `viewpoints`.
pub fn plan_tour(viewpoints: &[Viewpoint], graph: &mut TopoGraph, map: &PointCloudMap, cfg: &Config) -> (GuidancePath, TourTiming) {
    let mut out = GuidancePath::default();
    let mut timing = TourTiming::default();
    if viewpoints.is_empty() || graph.odom().is_none() {
        out.excluded = viewpoints.iter().map(|v| v.cluster_id).collect();
        return (out, timing);
    }
    let t0 = Instant::now();
    let cp = graph.checkpoint();
    let mut nodes = vec![ODOM_ID];
    let mut kept = Vec::new();
    for vp in viewpoints {
        match graph.connect_temp_vertex(map, &vp.position) {
            Ok((id, _)) => {
                nodes.push(id);
                kept.push(*vp);
            }
            Err(_) => {
                log::warn!("viewpoint for cluster {} could not be connected", vp.cluster_id);
                out.excluded.push(vp.cluster_id);
            }
        }
    }
    // drop viewpoints the start cannot reach
    let from_start = distances_from(graph, ODOM_ID, &nodes);
    let mut reach_nodes = vec![ODOM_ID];
    let mut reach_vps = Vec::new();
    for (i, vp) in kept.iter().enumerate() {
        if from_start[i + 1].is_finite() {
            reach_nodes.push(nodes[i + 1]);
            reach_vps.push(*vp);
        } else {
            log::warn!("viewpoint for cluster {} is unreachable", vp.cluster_id);
            out.excluded.push(vp.cluster_id);
        }
    }
    let n = reach_nodes.len();
    let mut cost = vec![vec![0.0; n]; n];
    for i in 0..n {
        let d = distances_from(graph, reach_nodes[i], &reach_nodes);
        for j in 1..n {
            cost[i][j] = d[j];
        }
    }
    timing.matrix_ms = t0.elapsed().as_secs_f64() * 1e3;
    let t1 = Instant::now();
    let (order, _) = atsp::solve_open_atsp(&cost, cfg.planner.exact_atsp_limit);
    timing.solve_ms = t1.elapsed().as_secs_f64() * 1e3;

    let mut prev = ODOM_ID;
    out.polyline.push(graph.odom().expect("odom present").position);
    for j in order {
        let (seq, _) = graph
            .graph_astar(prev, reach_nodes[j])
            .expect("reachable within the same component");
        let piece = graph.stitch(&seq);
        out.polyline.extend(piece.into_iter().skip(1));
        out.arrivals.push(out.polyline.len() - 1);
        out.viewpoints.push(reach_vps[j - 1]);
        prev = reach_nodes[j];
    }
    graph.rollback(cp);
    out.length = polyline_length(&out.polyline);
    (out, timing)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub sim_time: f64,
    pub ranked: Vec<u64>,
    pub viewpoints: Vec<Viewpoint>,
    pub tour_order: Vec<u64>,
    pub deferred: Vec<u64>,
    pub matrix_ms: f64,
    pub solve_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CycleOutcome {
    /// No active frontier cluster remains.
    Finished,
    /// Clusters remain but none yielded a reachable viewpoint.
    NoViewpoint,
    Path(GuidancePath),
}

/// One planning cycle over the current maps.
#[allow(clippy::too_many_arguments)]
pub fn plan_cycle(
    frontiers: &mut FrontierManager,
    graph: &mut TopoGraph,
    map: &PointCloudMap,
    lidar: &LidarModel,
    log: &FlightLog,
    cfg: &Config,
    mode: ExecMode,
    record: &mut CycleRecord,
) -> CycleOutcome {
    let t0 = Instant::now();
    let active = frontiers.active_ids(cfg.planner.max_defer, cfg.planner.max_visits);
    if active.is_empty() {
        record.total_ms = t0.elapsed().as_secs_f64() * 1e3;
        return CycleOutcome::Finished;
    }
    let ranked = rank_clusters(active.iter().filter_map(|id| frontiers.cluster(*id)), log);
    let mut vps = Vec::new();
    for id in &ranked {
        if vps.len() >= cfg.planner.top_k {
            break;
        }
        let c = frontiers.cluster(*id).expect("ranked cluster exists").clone();
        match select_viewpoint(&c, graph, map, lidar, cfg, mode) {
            Some(v) => vps.push(v),
            None => {
                frontiers.mark_deferred(*id);
                record.deferred.push(*id);
            }
        }
    }
    record.ranked = ranked;
    let outcome = if vps.is_empty() {
        CycleOutcome::NoViewpoint
    } else {
        let (path, timing) = plan_tour(&vps, graph, map, cfg);
        record.matrix_ms = timing.matrix_ms;
        record.solve_ms = timing.solve_ms;
        record.viewpoints = path.viewpoints.clone();
        record.tour_order = path.viewpoints.iter().map(|v| v.cluster_id).collect();
        for id in &path.excluded {
            frontiers.mark_deferred(*id);
            record.deferred.push(*id);
        }
        if path.is_empty() {
            CycleOutcome::NoViewpoint
        } else {
            CycleOutcome::Path(path)
        }
    };
    record.total_ms = t0.elapsed().as_secs_f64() * 1e3;
    outcome
}
