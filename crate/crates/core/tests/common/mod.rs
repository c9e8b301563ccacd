#![allow(dead_code)]

use pcx_core::frontier::{detect_frontiers, FrontierChanges, FrontierManager};
use pcx_core::obsmap::{ObsUpdate, ObservationMap};
use pcx_core::pcmap::{InsertResult, PointCloudMap};
use pcx_core::world::{raycast_scan, LidarModel, Pose, ScanFrame, World};
use pcx_core::{Config, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random walk of poses that keep `clearance` from the true geometry.
pub fn walk(world: &World, start: Vec3, n: usize, step: f64, clearance: f64, seed: u64) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner = world.bounds.inflate(-clearance);
    let mut p = start;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..30 {
            let th: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let dz: f64 = rng.gen_range(-0.3..0.3);
            let q = p + Vec3::new(th.cos() * step, th.sin() * step, dz);
            if inner.contains(&q) && world.distance_to_geometry(&q) >= clearance {
                p = q;
                break;
            }
        }
        out.push(Pose::new(p, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)));
    }
    out
}

/// The per-frame mapping chain without the planner.
pub struct Mapper {
    pub world: World,
    pub lidar: LidarModel,
    pub cfg: Config,
    pub pc: PointCloudMap,
    pub obs: ObservationMap,
    pub frontiers: FrontierManager,
    pub odometer: f64,
    last: Option<Vec3>,
}

pub struct Step {
    pub frame: ScanFrame,
    pub insert: InsertResult,
    pub update: ObsUpdate,
    pub changes: FrontierChanges,
    pub new_clusters: Vec<u64>,
}

impl Mapper {
    pub fn new(world: World, lidar: LidarModel, cfg: Config) -> Self {
        Self {
            pc: PointCloudMap::new(cfg.pcmap.clone()),
            obs: ObservationMap::new(cfg.obs.clone()),
            frontiers: FrontierManager::new(cfg.cluster.clone(), cfg.obs.res),
            world,
            lidar,
            cfg,
            odometer: 0.0,
            last: None,
        }
    }

    pub fn step(&mut self, pose: &Pose) -> Step {
        if let Some(l) = self.last {
            self.odometer += (pose.position - l).norm();
        }
        self.last = Some(pose.position);
        let frame = raycast_scan(&self.world, &self.lidar, pose).unwrap();
        let insert = self.pc.insert_frame(&frame);
        let update = self.obs.update_observation(&frame);
        let changes = detect_frontiers(&mut self.obs, &update, &self.pc, &pose.position, &self.cfg.cluster);
        let new_clusters = self
            .frontiers
            .incremental_recluster(&self.obs, &changes, &pose.position, self.odometer);
        Step {
            frame,
            insert,
            update,
            changes,
            new_clusters,
        }
    }
}

/// Connected components of `0..n` under a symmetric predicate, by repeated
/// relabelling; each group sorted, groups sorted.
pub fn components(n: usize, linked: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if i != j && label[j] < label[i] && linked(i, j) {
                    label[i] = label[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, l) in label.into_iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

/// Point-cloud map and topological graph fed by scans.
pub struct GraphRun {
    pub pc: PointCloudMap,
    pub graph: pcx_core::topo::TopoGraph,
}

impl GraphRun {
    pub fn new(s: &pcx_core::world::Scenario) -> Self {
        let cfg = Config::default();
        Self {
            pc: PointCloudMap::new(cfg.pcmap.clone()),
            graph: pcx_core::topo::TopoGraph::new(cfg.topo.clone(), s.world.bounds),
        }
    }

    /// Scans from `pose` and updates both maps; returns the sensor position
    /// and the frame's ray ends.
    pub fn step(&mut self, s: &pcx_core::world::Scenario, pose: &Pose) -> (Vec3, Vec<Vec3>) {
        let f = raycast_scan(&s.world, &s.lidar, pose).unwrap();
        let ins = self.pc.insert_frame(&f);
        let ends = f.ray_ends();
        self.graph.update(
            &self.pc,
            &pose.position,
            &ends,
            &ins.new_cells,
            &pose.position,
            pcx_core::exec::ExecMode::Parallel,
        );
        (pose.position, ends)
    }
}

/// All orderings of `items`.
pub fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}
