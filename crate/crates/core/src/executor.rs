//! Kinematic path following and the sense, update, plan, move loop.

use std::time::Instant;

use serde::Serialize;

use crate::config::Config;
use crate::exec::ExecMode;
use crate::frontier::{detect_frontiers, FrontierManager};
use crate::geom::{Aabb, Vec3};
use crate::memory::{dense_grid_bytes, swept_box, MemorySample};
use crate::obsmap::ObservationMap;
use crate::pcmap::PointCloudMap;
use crate::planner::{plan_cycle, CycleOutcome, CycleRecord, FlightLog, GuidancePath};
use crate::topo::{TopoFrameStats, TopoGraph};
use crate::world::{raycast_scan_with, Pose, Scenario, WorldError};

/// Progress along a guidance polyline.
#[derive(Clone, Debug, PartialEq)]
pub struct Follower {
    pub path: GuidancePath,
    /// Index of the next polyline vertex to reach.
    next: usize,
    /// Number of viewpoints already passed.
    reached: usize,
}

impl Follower {
    pub fn new(path: GuidancePath) -> Self {
        Self {
            path,
            next: 1,
            reached: 0,
        }
    }

    pub fn done(&self) -> bool {
        self.next >= self.path.polyline.len()
    }

    pub fn next_index(&self) -> usize {
        self.next
    }

    /// Remaining polyline starting at `from`.
    pub fn remaining(&self, from: &Vec3) -> Vec<Vec3> {
        let mut v = vec![*from];
        if !self.done() {
            v.extend_from_slice(&self.path.polyline[self.next..]);
        }
        v
    }

    /// Advances `pose` along the path by up to `v_max·dt`, turning the yaw
    /// toward the next waypoint by at most `yaw_rate·dt` (radians). The
    /// distance moved is added to `log` and returned together with the
    /// cluster ids of viewpoints reached during the step.
    pub fn step(&mut self, pose: &mut Pose, log: &mut FlightLog, dt: f64, v_max: f64, yaw_rate: f64) -> (f64, Vec<u64>) {
        let mut reached = Vec::new();
        if dt <= 0.0 {
            return (0.0, reached);
        }
        let mut budget = v_max * dt;
        let mut moved = 0.0;
        let mut p = pose.position;
        while budget > 0.0 && !self.done() {
            let w = self.path.polyline[self.next];
            let d = (w - p).norm();
            if d <= budget {
                moved += d;
                budget -= d;
                p = w;
                log.record(p);
                while self.reached < self.path.arrivals.len() && self.path.arrivals[self.reached] <= self.next {
                    reached.push(self.path.viewpoints[self.reached].cluster_id);
                    self.reached += 1;
                }
                self.next += 1;
            } else {
                p += (w - p) * (budget / d);
                moved += budget;
                budget = 0.0;
                log.record(p);
            }
        }
        let target = if self.done() {
            self.path.viewpoints.last().map(|v| v.yaw)
        } else {
            let d = self.path.polyline[self.next] - p;
            (d.x.hypot(d.y) > 1e-9).then(|| d.y.atan2(d.x))
        };
        let mut yaw = pose.yaw;
        if let Some(t) = target {
            let diff = crate::geom::wrap_angle(t - yaw);
            let lim = yaw_rate * dt;
            yaw += diff.clamp(-lim, lim);
        }
        *pose = Pose::new(p, yaw);
        (moved, reached)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Finished,
    Stalled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

/// Timing and graph statistics of one frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FrameRecord {
    pub t: f64,
    pub scan_ms: f64,
    pub map_ms: f64,
    pub frontier_ms: f64,
    pub topo_ms: f64,
    pub topo: TopoFrameStats,
    pub new_cells: usize,
    pub clusters: usize,
}

#[derive(Clone, Debug)]
pub struct ExplorationState {
    pub scenario: Scenario,
    pub cfg: Config,
    pub mode: ExecMode,
    pub uav: Pose,
    pub odometer: FlightLog,
    pub pc: PointCloudMap,
    pub obs: ObservationMap,
    pub frontiers: FrontierManager,
    pub graph: TopoGraph,
    pub cycle: usize,
    pub status: Status,
    pub sim_time: f64,
    pub frames: usize,
    pub follower: Option<Follower>,
    pub cycles: Vec<CycleRecord>,
    pub frame_log: Vec<FrameRecord>,
    pub memory: Vec<MemorySample>,
    pub trajectory: Vec<TrajectorySample>,
    pub explored: Aabb,
    /// Smallest clearance to the mapped obstacle cells seen at any step.
    pub min_clearance: f64,
    /// Smallest distance to the true geometry seen at any step.
    pub min_world_clearance: f64,
    pub stall_reason: Option<String>,
    next_plan: f64,
    idle_cycles: u32,
    started: Instant,
}

impl ExplorationState {
    pub fn new(scenario: Scenario, cfg: Config, mode: ExecMode) -> Result<Self, WorldError> {
        let start = scenario.start_pose;
        let bounds = scenario.world.bounds;
        if !bounds.contains(&start.position) {
            return Err(WorldError::PoseOutOfBounds(start.position.into()));
        }
        if scenario.world.is_solid(&start.position) {
            return Err(WorldError::PoseInsideObstacle(start.position.into()));
        }
        Ok(Self {
            uav: start,
            odometer: FlightLog::new(start.position, cfg.executor.log_spacing),
            pc: PointCloudMap::new(cfg.pcmap.clone()),
            obs: ObservationMap::new(cfg.obs.clone()),
            frontiers: FrontierManager::new(cfg.cluster.clone(), cfg.obs.res),
            graph: TopoGraph::new(cfg.topo.clone(), bounds),
            cycle: 0,
            status: Status::Running,
            sim_time: 0.0,
            frames: 0,
            follower: None,
            cycles: Vec::new(),
            frame_log: Vec::new(),
            memory: Vec::new(),
            trajectory: Vec::new(),
            explored: Aabb::empty(),
            min_clearance: f64::INFINITY,
            min_world_clearance: f64::INFINITY,
            stall_reason: None,
            next_plan: 0.0,
            idle_cycles: 0,
            started: Instant::now(),
            scenario,
            cfg,
            mode,
        })
    }

    /// Senses from the current pose and updates every map.
    pub fn sense(&mut self) -> Result<FrameRecord, WorldError> {
        let mut rec = FrameRecord {
            t: self.sim_time,
            ..Default::default()
        };
        let t0 = Instant::now();
        let frame = raycast_scan_with(&self.scenario.world, &self.scenario.lidar, &self.uav, self.sim_time, self.mode)?;
        rec.scan_ms = ms(t0);

        let t0 = Instant::now();
        let ins = self.pc.insert_frame(&frame);
        let upd = self.obs.update_observation(&frame);
        rec.map_ms = ms(t0);
        rec.new_cells = ins.new_cells.len();

        let t0 = Instant::now();
        let sensor = frame.sensor_pose.position;
        let changes = detect_frontiers(&mut self.obs, &upd, &self.pc, &sensor, &self.cfg.cluster);
        self.frontiers
            .incremental_recluster(&self.obs, &changes, &sensor, self.odometer.total());
        rec.frontier_ms = ms(t0);
        rec.clusters = self.frontiers.len();

        let t0 = Instant::now();
        let ends = frame.ray_ends();
        rec.topo = self
            .graph
            .update(&self.pc, &sensor, &ends, &ins.new_cells, &self.uav.position, self.mode);
        rec.topo_ms = ms(t0);

        let bounds = self.scenario.world.bounds;
        self.explored = self.explored.union(&swept_box(&sensor, &ends, &bounds));
        self.memory.push(MemorySample {
            t: self.sim_time,
            obs_map: self.obs.memory_bytes(),
            dense_grid: dense_grid_bytes(&self.explored, self.cfg.obs.res),
            preallocated_grid: dense_grid_bytes(&bounds, self.cfg.obs.res),
            pc_map: self.pc.memory_bytes(),
        });
        self.frames += 1;

        if !ins.new_cells.is_empty() {
            if let Some(f) = &self.follower {
                let rest = f.remaining(&self.uav.position);
                let safety = self.cfg.topo.safety_radius;
                if rest.windows(2).any(|w| !self.pc.segment_cells_clear(&w[0], &w[1], safety)) {
                    log::debug!("path blocked at t={:.1}", self.sim_time);
                    self.follower = None;
                }
            }
        }
        self.frame_log.push(rec.clone());
        Ok(rec)
    }

    fn plan(&mut self) {
        let mut rec = CycleRecord {
            cycle: self.cycle,
            sim_time: self.sim_time,
            ..Default::default()
        };
        let outcome = plan_cycle(
            &mut self.frontiers,
            &mut self.graph,
            &self.pc,
            &self.scenario.lidar,
            &self.odometer,
            &self.cfg,
            self.mode,
            &mut rec,
        );
        self.cycle += 1;
        self.cycles.push(rec);
        self.next_plan = self.sim_time + self.cfg.executor.replan_period;
        match outcome {
            CycleOutcome::Finished => {
                self.status = Status::Finished;
                self.follower = None;
            }
            CycleOutcome::NoViewpoint => {
                self.follower = None;
                self.idle_cycles += 1;
                if self.idle_cycles >= self.cfg.executor.max_idle_cycles {
                    self.stall("no reachable viewpoint");
                }
            }
            CycleOutcome::Path(p) => {
                self.idle_cycles = 0;
                self.follower = Some(Follower::new(p));
            }
        }
    }

    fn stall(&mut self, why: &str) {
        log::warn!("stalled at t={:.1}: {why}", self.sim_time);
        self.status = Status::Stalled;
        self.stall_reason = Some(why.to_string());
    }

    fn record_pose(&mut self) {
        let p = self.uav.position;
        self.trajectory.push(TrajectorySample {
            t: self.sim_time,
            x: p.x,
            y: p.y,
            z: p.z,
            yaw: self.uav.yaw,
        });
        let cap = self.cfg.topo.safety_radius + 1.0;
        self.min_clearance = self.min_clearance.min(self.pc.cell_clearance(&p, cap));
        self.min_world_clearance = self
            .min_world_clearance
            .min(self.scenario.world.distance_to_geometry(&p));
    }

    /// One frame: sense, plan when due, then move for one time step.
    pub fn tick(&mut self) -> Result<Status, WorldError> {
        if self.status != Status::Running {
            return Ok(self.status);
        }
        if self.trajectory.is_empty() {
            self.record_pose();
        }
        self.sense()?;
        let due = self.follower.as_ref().is_none_or(|f| f.done()) || self.sim_time + 1e-9 >= self.next_plan;
        if due {
            self.plan();
            if self.status != Status::Running {
                return Ok(self.status);
            }
        }
        let ex = &self.cfg.executor;
        let (dt, v, w) = (ex.dt, ex.v_max, ex.yaw_rate_deg.to_radians());
        if let Some(f) = &mut self.follower {
            let (_, reached) = f.step(&mut self.uav, &mut self.odometer, dt, v, w);
            for id in reached {
                self.frontiers.mark_visited(id);
            }
        }
        self.sim_time = self.frames as f64 * dt;
        self.record_pose();
        if self.sim_time >= self.cfg.executor.max_sim_time {
            self.stall("simulated time budget exceeded");
        } else if self.started.elapsed().as_secs_f64() >= self.cfg.executor.wall_time_budget {
            self.stall("wall time budget exceeded");
        }
        Ok(self.status)
    }

    pub fn report(&self) -> ExplorationReport {
        let times: Vec<f64> = self.cycles.iter().map(|c| c.total_ms).collect();
        let quarantined = self
            .frontiers
            .clusters()
            .filter(|c| {
                self.frontiers
                    .is_quarantined(c.id, self.cfg.planner.max_defer, self.cfg.planner.max_visits)
            })
            .count();
        ExplorationReport {
            scene: self.scenario.world.name.clone(),
            status: self.status,
            stall_reason: self.stall_reason.clone(),
            exploration_time: self.sim_time,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            path_length: self.odometer.total(),
            frames: self.frames,
            cycles: self.cycles.len(),
            cycle_times_ms: times,
            cycle_records: self.cycles.clone(),
            frame_records: self.frame_log.clone(),
            memory: self.memory.clone(),
            trajectory: self.trajectory.clone(),
            min_clearance: self.min_clearance,
            min_world_clearance: self.min_world_clearance,
            remaining_clusters: self.frontiers.len(),
            quarantined_clusters: quarantined,
            well_observed: self.obs.count(crate::obsmap::Label::Well),
            surface_voxels: self.obs.len(),
            graph_vertices: self.graph.vertex_count(),
            graph_edges: self.graph.edge_count(),
            max_distance: self.cfg.obs.max_distance,
            ratio_threshold: self.cfg.obs.ratio_threshold,
            safety_radius: self.cfg.topo.safety_radius,
        }
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

#[derive(Clone, Debug, Serialize)]
pub struct ExplorationReport {
    pub scene: String,
    pub status: Status,
    pub stall_reason: Option<String>,
    /// Simulated seconds.
    pub exploration_time: f64,
    pub wall_time_s: f64,
    pub path_length: f64,
    pub frames: usize,
    pub cycles: usize,
    pub cycle_times_ms: Vec<f64>,
    pub cycle_records: Vec<CycleRecord>,
    pub frame_records: Vec<FrameRecord>,
    pub memory: Vec<MemorySample>,
    pub trajectory: Vec<TrajectorySample>,
    pub min_clearance: f64,
    pub min_world_clearance: f64,
    pub remaining_clusters: usize,
    pub quarantined_clusters: usize,
    pub well_observed: usize,
    pub surface_voxels: usize,
    pub graph_vertices: usize,
    pub graph_edges: usize,
    pub max_distance: f64,
    pub ratio_threshold: f64,
    pub safety_radius: f64,
}

/// Runs the loop until it finishes or stalls, returning the final state.
pub fn explore(scenario: Scenario, cfg: Config, mode: ExecMode) -> Result<ExplorationState, WorldError> {
    let mut st = ExplorationState::new(scenario, cfg, mode)?;
    while st.tick()? == Status::Running {}
    log::info!(
        "{}: {:?} after {:.1} s, {:.1} m, {} cycles",
        st.scenario.world.name,
        st.status,
        st.sim_time,
        st.odometer.total(),
        st.cycles.len()
    );
    Ok(st)
}

pub fn run_exploration(scenario: Scenario, cfg: Config, mode: ExecMode) -> Result<ExplorationReport, WorldError> {
    Ok(explore(scenario, cfg, mode)?.report())
}
