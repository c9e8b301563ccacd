//! Tunable parameters for every stage of the pipeline. All values can be
//! overridden from a TOML file; unspecified keys keep their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcMapConfig {
    pub cell_size: f64,
    pub min_point_spacing: f64,
    pub search_cap: f64,
}

impl Default for PcMapConfig {
    fn default() -> Self {
        Self {
            cell_size: 0.4,
            min_point_spacing: 0.1,
            search_cap: 5.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayPairs {
    /// All six unordered pairs of the four corner beams.
    #[default]
    All,
    /// Only the four pairs that share a grid edge.
    EdgeAdjacent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObsConfig {
    pub res: f64,
    /// Maximum sensor-to-surface distance for a well-observed patch.
    pub max_distance: f64,
    /// Minimum ratio between adjacent beam ranges.
    pub ratio_threshold: f64,
    pub ray_pairs: RayPairs,
}

impl Default for ObsConfig {
    fn default() -> Self {
        Self {
            res: 0.4,
            max_distance: 15.0,
            ratio_threshold: 0.9,
            ray_pairs: RayPairs::All,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub eps_d: f64,
    pub eps_n: f64,
    pub cluster_aabb_max: f64,
    /// Normal estimation radius as a multiple of the observation resolution.
    pub normal_radius_factor: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            eps_d: 1.0,
            eps_n: 0.5,
            cluster_aabb_max: 6.0,
            normal_radius_factor: 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMeasure {
    /// r1 + r2 - d
    #[default]
    Penetration,
    /// Radius of the circle where the two spheres intersect.
    CircleRadius,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopoConfig {
    pub region_size: f64,
    pub safety_radius: f64,
    /// Sphere radius cap; `None` means half the diagonal of a full region.
    pub radius_cap: Option<f64>,
    pub astar_pitch: f64,
    pub vertex_match_tol: f64,
    pub overlap: OverlapMeasure,
}

impl Default for TopoConfig {
    fn default() -> Self {
        Self {
            region_size: 5.0,
            safety_radius: 0.8,
            radius_cap: None,
            astar_pitch: 0.4,
            vertex_match_tol: 0.2,
            overlap: OverlapMeasure::Penetration,
        }
    }
}

impl TopoConfig {
    pub fn effective_radius_cap(&self) -> f64 {
        self.radius_cap
            .unwrap_or(0.5 * 3.0_f64.sqrt() * self.region_size)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub top_k: usize,
    pub exact_atsp_limit: usize,
    pub yaw_samples: usize,
    pub vp_radii: Vec<f64>,
    pub vp_azimuths: usize,
    pub vp_heights: Vec<f64>,
    /// Maximum angle (degrees) between view ray and frontier normal.
    pub normal_angle_deg: f64,
    /// Frontier voxels per cluster used for coverage scoring.
    pub score_samples: usize,
    pub max_defer: u32,
    /// Arrivals at a cluster's viewpoint before it is quarantined.
    pub max_visits: u32,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            top_k: 8,
            exact_atsp_limit: 12,
            yaw_samples: 18,
            vp_radii: vec![2.0, 4.0, 6.0],
            vp_azimuths: 12,
            vp_heights: vec![-1.5, 0.0, 1.5],
            normal_angle_deg: 75.0,
            score_samples: 24,
            max_defer: 5,
            max_visits: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutorConfig {
    pub dt: f64,
    pub v_max: f64,
    pub yaw_rate_deg: f64,
    pub replan_period: f64,
    pub log_spacing: f64,
    pub max_sim_time: f64,
    pub wall_time_budget: f64,
    /// Consecutive empty plans (with clusters pending) before stalling.
    pub max_idle_cycles: u32,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            v_max: 4.0,
            yaw_rate_deg: 90.0,
            replan_period: 1.0,
            log_spacing: 0.5,
            max_sim_time: 3000.0,
            wall_time_budget: 900.0,
            max_idle_cycles: 30,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub pcmap: PcMapConfig,
    pub obs: ObsConfig,
    pub cluster: ClusterConfig,
    pub topo: TopoConfig,
    pub planner: PlannerConfig,
    pub executor: ExecutorConfig,
}

impl Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.pcmap.cell_size > 0.0) || !(self.pcmap.min_point_spacing >= 0.0) {
            return bad("pcmap.cell_size must be positive");
        }
        if !(self.obs.res > 0.0) {
            return bad("obs.res must be positive");
        }
        if !(self.obs.max_distance > self.obs.res) {
            return bad("obs.max_distance must exceed obs.res");
        }
        if !(self.obs.ratio_threshold > 0.0 && self.obs.ratio_threshold <= 1.0) {
            return bad("obs.ratio_threshold must lie in (0, 1]");
        }
        if !(self.cluster.eps_d > 0.0) || !(-1.0..=1.0).contains(&self.cluster.eps_n) {
            return bad("cluster.eps_d must be positive and eps_n in [-1, 1]");
        }
        if !(self.topo.safety_radius > 0.0) || !(self.topo.region_size > self.topo.safety_radius) {
            return bad("topo.region_size must exceed a positive safety_radius");
        }
        if !(self.topo.astar_pitch > 0.0) {
            return bad("topo.astar_pitch must be positive");
        }
        if self.planner.yaw_samples == 0 || self.planner.vp_azimuths == 0 {
            return bad("planner sampling counts must be positive");
        }
        if !(self.executor.dt > 0.0) || !(self.executor.v_max > 0.0) {
            return bad("executor.dt and executor.v_max must be positive");
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}
