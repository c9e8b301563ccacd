//! Multi-goal path search comparison, memory replay and planning-cycle
//! statistics.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;

use crate::config::Config;
use crate::exec::ExecMode;
use crate::executor::{ExplorationReport, TrajectorySample};
use crate::geom::{polyline_length, Aabb, Vec3, VoxelKey};
use crate::memory::{dense_grid_bytes, dense_grid_dims, swept_box, MemorySample};
use crate::obsmap::ObservationMap;
use crate::pcmap::PointCloudMap;
use crate::topo::TopoGraph;
use crate::world::{raycast_scan_with, Pose, World, WorldError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    /// A* on the topological graph.
    TG,
    /// Grid A* with nearest-point queries on the point cloud per node.
    PC,
    /// Grid A* on a dense occupancy grid rasterized from the cloud.
    OG,
}

pub const ALL_METHODS: [Method; 3] = [Method::TG, Method::PC, Method::OG];

/// Serpentine scan positions at height `z` with lane spacing `spacing`,
/// keeping only positions at least `clearance` from the true geometry.
pub fn lawnmower(world: &World, spacing: f64, step: f64, z: f64, clearance: f64) -> Vec<Vec3> {
    let b = world.bounds.inflate(-spacing * 0.5);
    let mut out = Vec::new();
    let lanes = ((b.max.y - b.min.y) / spacing).floor() as usize + 1;
    let cols = ((b.max.x - b.min.x) / step).floor() as usize + 1;
    for l in 0..lanes {
        let y = b.min.y + l as f64 * spacing;
        for c in 0..cols {
            let c = if l % 2 == 0 { c } else { cols - 1 - c };
            let p = Vec3::new(b.min.x + c as f64 * step, y, z);
            if world.distance_to_geometry(&p) >= clearance {
                out.push(p);
            }
        }
    }
    out
}

/// Maps and graph built by scanning from a sequence of positions.
#[derive(Clone, Debug)]
pub struct MappedWorld {
    pub pc: PointCloudMap,
    pub graph: TopoGraph,
    pub frames: usize,
}

pub fn map_by_scans(world: &World, lidar: &crate::world::LidarModel, positions: &[Vec3], cfg: &Config, mode: ExecMode) -> Result<MappedWorld, WorldError> {
    let mut pc = PointCloudMap::new(cfg.pcmap.clone());
    let mut graph = TopoGraph::new(cfg.topo.clone(), world.bounds);
    for (i, p) in positions.iter().enumerate() {
        let pose = Pose::new(*p, 0.0);
        let f = raycast_scan_with(world, lidar, &pose, i as f64, mode)?;
        let ins = pc.insert_frame(&f);
        graph.update(&pc, p, &f.ray_ends(), &ins.new_cells, p, mode);
    }
    Ok(MappedWorld {
        pc,
        graph,
        frames: positions.len(),
    })
}

/// Centres of `pitch` cells reachable from `start` through cells whose
/// centre is at least `clearance` from the true geometry and inside
/// `bounds`.
pub fn free_flood_fill(world: &World, start: &Vec3, pitch: f64, clearance: f64) -> FxHashSet<VoxelKey> {
    let o = Vec3::zeros();
    let key = |p: &Vec3| VoxelKey::from_point(p, &o, pitch);
    let free = |k: &VoxelKey| {
        let c = k.center(&o, pitch);
        world.bounds.contains(&c) && world.distance_to_geometry(&c) >= clearance
    };
    let mut seen = FxHashSet::default();
    let s = key(start);
    if !free(&s) {
        return seen;
    }
    let mut q = VecDeque::from([s]);
    seen.insert(s);
    while let Some(k) = q.pop_front() {
        for n in k.neighbors26() {
            if !seen.contains(&n) && free(&n) {
                seen.insert(n);
                q.push_back(n);
            }
        }
    }
    seen
}

/// `n` distinct random goals on cells reachable from `start`, lying within
/// `z_range` and at least `min_sep` from `start`.
pub fn sample_goals(
    reachable: &FxHashSet<VoxelKey>,
    pitch: f64,
    start: &Vec3,
    n: usize,
    z_range: (f64, f64),
    min_sep: f64,
    seed: u64,
) -> Vec<Vec3> {
    let mut keys: Vec<VoxelKey> = reachable
        .iter()
        .copied()
        .filter(|k| {
            let c = k.center(&Vec3::zeros(), pitch);
            c.z >= z_range.0 && c.z <= z_range.1 && (c - start).norm() >= min_sep
        })
        .collect();
    keys.sort_by_key(|k| (k.x, k.y, k.z));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < n && !keys.is_empty() {
        let i = rng.gen_range(0..keys.len());
        out.push(keys.swap_remove(i).center(&Vec3::zeros(), pitch));
    }
    out
}

/// Dense occupancy raster of the cloud's occupied cells, one byte each.
#[derive(Clone, Debug)]
pub struct DenseGrid {
    base: VoxelKey,
    res: f64,
    dims: [usize; 3],
    cells: Vec<u8>,
}

impl DenseGrid {
    pub fn from_map(pc: &PointCloudMap, bounds: &Aabb) -> Self {
        let res = pc.cell_size();
        let origin = Vec3::new(
            (bounds.min.x / res).floor() * res,
            (bounds.min.y / res).floor() * res,
            (bounds.min.z / res).floor() * res,
        );
        let b = Aabb::new(origin, bounds.max);
        let dims = dense_grid_dims(&b, res);
        let mut g = Self {
            base: VoxelKey::from_point(&(origin + Vec3::repeat(res * 0.5)), &Vec3::zeros(), res),
            res,
            dims,
            cells: vec![0; dims.iter().product()],
        };
        for k in pc.occupied_cells() {
            if let Some(i) = g.index(k) {
                g.cells[i] = 1;
            }
        }
        g
    }

    fn index(&self, k: &VoxelKey) -> Option<usize> {
        let o = &self.base;
        let (x, y, z) = (k.x - o.x, k.y - o.y, k.z - o.z);
        if x < 0 || y < 0 || z < 0 {
            return None;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        if x >= self.dims[0] || y >= self.dims[1] || z >= self.dims[2] {
            return None;
        }
        Some((x * self.dims[1] + y) * self.dims[2] + z)
    }

    pub fn occupied(&self, k: &VoxelKey) -> bool {
        self.index(k).is_some_and(|i| self.cells[i] != 0)
    }

    pub fn memory_bytes(&self) -> usize {
        self.cells.len()
    }
}

/// Cell offsets whose boxes come within `r` of the centre of the origin
/// cell.
fn ball_offsets(res: f64, r: f64) -> Vec<VoxelKey> {
    let n = (r / res).ceil() as i32 + 1;
    let cell = Aabb::new(Vec3::repeat(-0.5 * res), Vec3::repeat(0.5 * res));
    let mut out = Vec::new();
    for x in -n..=n {
        for y in -n..=n {
            for z in -n..=n {
                let off = Vec3::new(x as f64, y as f64, z as f64) * res;
                let b = Aabb::new(cell.min + off, cell.max + off);
                if b.distance_to_point(&Vec3::zeros()) < r {
                    out.push(VoxelKey::new(x, y, z));
                }
            }
        }
    }
    out
}

/// Plain 26-connected grid A* between two points through nodes accepted by
/// `free`. Start and goal link to free nodes of their own 27-block when
/// `link` accepts the segment.
pub fn grid_astar(
    pitch: f64,
    start: &Vec3,
    goal: &Vec3,
    scope: &Aabb,
    mut free: impl FnMut(&VoxelKey) -> bool,
    mut link: impl FnMut(&Vec3, &Vec3) -> bool,
) -> Option<Vec<Vec3>> {
    let o = Vec3::zeros();
    let center = |k: &VoxelKey| k.center(&o, pitch);
    let mut links = |p: &Vec3, free: &mut dyn FnMut(&VoxelKey) -> bool| -> Vec<(VoxelKey, f64)> {
        VoxelKey::from_point(p, &o, pitch)
            .block27()
            .into_iter()
            .filter(|k| scope.contains(&center(k)) && free(k) && link(p, &center(k)))
            .map(|k| (k, (center(&k) - p).norm()))
            .collect()
    };
    let starts = links(start, &mut free);
    let goals: FxHashMap<VoxelKey, f64> = links(goal, &mut free).into_iter().collect();
    if starts.is_empty() || goals.is_empty() {
        return None;
    }
    let mut best: FxHashMap<VoxelKey, (f64, Option<VoxelKey>)> = FxHashMap::default();
    let mut state: FxHashMap<VoxelKey, bool> = FxHashMap::default();
    let mut closed = FxHashSet::default();
    let mut open = BinaryHeap::new();
    for (k, d) in &starts {
        best.insert(*k, (*d, None));
        open.push(Reverse(((d + (center(k) - goal).norm()).to_bits(), Some(*k))));
    }
    let mut goal_best = (f64::INFINITY, None);
    while let Some(Reverse((_, item))) = open.pop() {
        let Some(k) = item else { break };
        if !closed.insert(k) {
            continue;
        }
        let g = best[&k].0;
        if let Some(l) = goals.get(&k) {
            if g + l < goal_best.0 {
                goal_best = (g + l, Some(k));
                open.push(Reverse(((g + l).to_bits(), None)));
            }
        }
        for n in k.neighbors26() {
            if closed.contains(&n) {
                continue;
            }
            let c = center(&n);
            if !scope.contains(&c) {
                continue;
            }
            let ok = *state.entry(n).or_insert_with(|| free(&n));
            if !ok {
                continue;
            }
            let step = ((n.x - k.x).abs() + (n.y - k.y).abs() + (n.z - k.z).abs()) as f64;
            let ng = g + pitch * step.sqrt();
            if best.get(&n).is_none_or(|(og, _)| ng < *og) {
                best.insert(n, (ng, Some(k)));
                open.push(Reverse(((ng + (c - goal).norm()).to_bits(), Some(n))));
            }
        }
    }
    let mut cur = goal_best.1?;
    let mut nodes = vec![*goal];
    loop {
        nodes.push(center(&cur));
        match best[&cur].1 {
            Some(p) => cur = p,
            None => break,
        }
    }
    nodes.push(*start);
    nodes.reverse();
    Some(nodes)
}

#[derive(Clone, Debug, Serialize)]
pub struct GoalResult {
    pub goal: Vec3,
    pub ms: f64,
    pub length: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodResult {
    pub method: Method,
    pub goals: Vec<GoalResult>,
    /// Sums over goals that every method solved.
    pub total_ms: f64,
    pub total_length: f64,
    pub failures: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct MultigoalReport {
    pub scene: String,
    pub bounds: Aabb,
    pub start: Vec3,
    pub goals: Vec<Vec3>,
    pub mapping_frames: usize,
    pub map_points: usize,
    pub graph_vertices: usize,
    pub graph_edges: usize,
    pub safety_radius: f64,
    pub pitch: f64,
    pub methods: Vec<MethodResult>,
}

impl MultigoalReport {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }
}

/// Runs each method from `start` to every goal on the same maps.
pub fn bench_multigoal(
    scene: &str,
    mapped: &mut MappedWorld,
    start: &Vec3,
    goals: &[Vec3],
    methods: &[Method],
    cfg: &Config,
) -> MultigoalReport {
    let bounds = *mapped.graph.bounds();
    let pitch = cfg.topo.astar_pitch;
    let safety = cfg.topo.safety_radius;
    let margin = safety + pitch * 3f64.sqrt() * 0.5;
    let grid = DenseGrid::from_map(&mapped.pc, &bounds);
    let offsets = ball_offsets(grid.res, margin);
    let link_offsets = ball_offsets(grid.res, safety);
    let mut results = Vec::new();
    for &m in methods {
        let mut rows = Vec::new();
        for g in goals {
            let t0 = Instant::now();
            let path = match m {
                Method::TG => tg_query(&mut mapped.graph, &mapped.pc, start, g),
                Method::PC => {
                    let pc = &mapped.pc;
                    grid_astar(
                        pitch,
                        start,
                        g,
                        &bounds,
                        |k| pc.nearest_distance(&k.center(&Vec3::zeros(), pitch)) >= margin,
                        |a, b| pc.segment_clear(a, b, safety),
                    )
                }
                Method::OG => {
                    let grid = &grid;
                    let blocked = |p: &Vec3, offs: &[VoxelKey]| {
                        let k = VoxelKey::from_point(p, &Vec3::zeros(), grid.res);
                        offs.iter().any(|o| grid.occupied(&k.offset(o.x, o.y, o.z)))
                    };
                    grid_astar(
                        pitch,
                        start,
                        g,
                        &bounds,
                        |k| !blocked(&k.center(&Vec3::zeros(), pitch), &offsets),
                        |a, b| {
                            let n = ((b - a).norm() / (grid.res * 0.25)).ceil().max(1.0) as usize;
                            (0..=n).all(|i| !blocked(&(a + (b - a) * (i as f64 / n as f64)), &link_offsets))
                        },
                    )
                }
            };
            rows.push(GoalResult {
                goal: *g,
                ms: t0.elapsed().as_secs_f64() * 1e3,
                length: path.map(|p| polyline_length(&p)),
            });
        }
        results.push(MethodResult {
            method: m,
            goals: rows,
            total_ms: 0.0,
            total_length: 0.0,
            failures: 0,
        });
    }
    let solved_by_all: Vec<bool> = (0..goals.len())
        .map(|i| results.iter().all(|r| r.goals[i].length.is_some()))
        .collect();
    for r in &mut results {
        r.failures = r.goals.iter().filter(|g| g.length.is_none()).count();
        for (i, g) in r.goals.iter().enumerate() {
            if solved_by_all[i] {
                r.total_ms += g.ms;
                r.total_length += g.length.unwrap_or(0.0);
            }
        }
    }
    MultigoalReport {
        scene: scene.to_string(),
        bounds,
        start: *start,
        goals: goals.to_vec(),
        mapping_frames: mapped.frames,
        map_points: mapped.pc.point_count(),
        graph_vertices: mapped.graph.vertex_count(),
        graph_edges: mapped.graph.edge_count(),
        safety_radius: safety,
        pitch,
        methods: results,
    }
}

/// Connects both endpoints to the graph, searches and stitches the route.
pub fn tg_query(graph: &mut TopoGraph, pc: &PointCloudMap, start: &Vec3, goal: &Vec3) -> Option<Vec<Vec3>> {
    // both temp vertices in sight of each other share an edge
    if graph.bounds().contains(start) && graph.bounds().contains(goal) && pc.segment_cells_clear(start, goal, graph.config().safety_radius) {
        return Some(vec![*start, *goal]);
    }
    let (s, cp) = graph.connect_temp_vertex(pc, start).ok()?;
    let path = graph.connect_temp_vertex(pc, goal).ok().and_then(|(g, _)| {
        let (seq, _) = graph.graph_astar(s, g)?;
        Some(graph.stitch(&seq))
    });
    graph.rollback(cp);
    path
}

#[derive(Clone, Debug, Serialize)]
pub struct MemoryReport {
    pub scene: String,
    pub res: f64,
    pub obs_per_entry_bytes: usize,
    pub obs_fixed_bytes: usize,
    pub series: Vec<MemorySample>,
    pub obs_entries: Vec<usize>,
}

impl MemoryReport {
    pub fn peak(&self, f: impl Fn(&MemorySample) -> usize) -> usize {
        self.series.iter().map(f).max().unwrap_or(0)
    }
}

/// Re-scans along a recorded trajectory and records the size of each
/// representation after every frame.
pub fn bench_memory(world: &World, lidar: &crate::world::LidarModel, trajectory: &[TrajectorySample], cfg: &Config, mode: ExecMode) -> Result<MemoryReport, WorldError> {
    let mut pc = PointCloudMap::new(cfg.pcmap.clone());
    let mut obs = ObservationMap::new(cfg.obs.clone());
    let mut explored = Aabb::empty();
    let mut series = Vec::with_capacity(trajectory.len());
    let mut entries = Vec::with_capacity(trajectory.len());
    for s in trajectory {
        let pose = Pose::new(Vec3::new(s.x, s.y, s.z), s.yaw);
        let f = raycast_scan_with(world, lidar, &pose, s.t, mode)?;
        pc.insert_frame(&f);
        obs.update_observation(&f);
        explored = explored.union(&swept_box(&pose.position, &f.ray_ends(), &world.bounds));
        series.push(MemorySample {
            t: s.t,
            obs_map: obs.memory_bytes(),
            dense_grid: dense_grid_bytes(&explored, cfg.obs.res),
            preallocated_grid: dense_grid_bytes(&world.bounds, cfg.obs.res),
            pc_map: pc.memory_bytes(),
        });
        entries.push(obs.len());
    }
    Ok(MemoryReport {
        scene: world.name.clone(),
        res: cfg.obs.res,
        obs_per_entry_bytes: ObservationMap::per_entry_bytes(),
        obs_fixed_bytes: ObservationMap::fixed_bytes(),
        series,
        obs_entries: entries,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CycleStats {
    pub count: usize,
    pub avg_ms: f64,
    pub max_ms: f64,
    /// `max_ms / avg_ms`.
    pub max_over_avg: f64,
}

pub fn cycle_stats(times_ms: &[f64]) -> CycleStats {
    if times_ms.is_empty() {
        return CycleStats::default();
    }
    let avg = times_ms.iter().sum::<f64>() / times_ms.len() as f64;
    let max = times_ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    CycleStats {
        count: times_ms.len(),
        avg_ms: avg,
        max_ms: max,
        max_over_avg: if avg > 0.0 { max / avg } else { 1.0 },
    }
}

pub fn bench_cycle_times(report: &ExplorationReport) -> CycleStats {
    cycle_stats(&report.cycle_times_ms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cycle_stats() {
        let s = cycle_stats(&[7.5]);
        assert_eq!((s.avg_ms, s.max_ms, s.max_over_avg), (7.5, 7.5, 1.0));
    }

    #[test]
    fn ball_offsets_are_symmetric() {
        let o = ball_offsets(0.4, 1.0);
        assert!(o.contains(&VoxelKey::new(0, 0, 0)));
        assert!(o.contains(&VoxelKey::new(-2, 0, 0)));
        assert!(!o.contains(&VoxelKey::new(3, 0, 0)));
        for k in &o {
            assert!(o.contains(&VoxelKey::new(-k.x, -k.y, -k.z)));
        }
    }

    #[test]
    fn grid_astar_in_open_space_is_near_straight() {
        let scope = Aabb::new(Vec3::zeros(), Vec3::repeat(10.0));
        let a = Vec3::new(1.0, 1.0, 1.0);
        let b = Vec3::new(8.0, 1.0, 1.0);
        let p = grid_astar(0.4, &a, &b, &scope, |_| true, |_, _| true).unwrap();
        assert!((polyline_length(&p) - 7.0).abs() < 0.4);
    }
}
