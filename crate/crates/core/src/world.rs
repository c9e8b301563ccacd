//! Synthetic ground-truth worlds and a deterministic raycasting LiDAR.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, ExecMode};
use crate::geom::{wrap_angle, Aabb, Vec3};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("failed to read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid bounds: {0}")]
    Bounds(String),
    #[error("geometry outside bounds: {0}")]
    OutOfBounds(String),
    #[error("invalid lidar model: {0}")]
    Lidar(String),
    #[error("sensor pose {0:?} lies inside solid geometry")]
    PoseInsideObstacle([f64; 3]),
    #[error("sensor pose {0:?} lies outside the world bounds")]
    PoseOutOfBounds([f64; 3]),
}

/// A solid ball, for worlds imported as point sets with per-point radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolidPoint {
    pub center: Vec3,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub name: String,
    pub bounds: Aabb,
    pub boxes: Vec<Aabb>,
    pub points: Vec<SolidPoint>,
}

impl World {
    pub fn new(
        name: impl Into<String>,
        bounds: Aabb,
        boxes: Vec<Aabb>,
        points: Vec<SolidPoint>,
    ) -> Result<Self, WorldError> {
        let e = bounds.extent();
        if bounds.is_empty() || e.x <= 0.0 || e.y <= 0.0 || e.z <= 0.0 {
            return Err(WorldError::Bounds(format!(
                "extent must be strictly positive on all axes, got {:?}",
                [e.x, e.y, e.z]
            )));
        }
        for (i, b) in boxes.iter().enumerate() {
            if b.is_empty() {
                return Err(WorldError::Bounds(format!("obstacle {i} has min > max")));
            }
            if !bounds.contains_box(b) {
                return Err(WorldError::OutOfBounds(format!("obstacle {i}")));
            }
        }
        for (i, s) in points.iter().enumerate() {
            let b = Aabb::new(s.center, s.center).inflate(s.radius);
            if s.radius <= 0.0 || !bounds.contains_box(&b) {
                return Err(WorldError::OutOfBounds(format!("point {i}")));
            }
        }
        Ok(Self {
            name: name.into(),
            bounds,
            boxes,
            points,
        })
    }

    pub fn obstacle_count(&self) -> usize {
        self.boxes.len() + self.points.len()
    }

    /// Strict interior test against every solid.
    pub fn is_solid(&self, p: &Vec3) -> bool {
        self.boxes.iter().any(|b| b.contains_strict(p))
            || self
                .points
                .iter()
                .any(|s| (p - s.center).norm() < s.radius)
    }

    /// Exact distance from `p` to the closest solid surface (0 inside).
    pub fn distance_to_geometry(&self, p: &Vec3) -> f64 {
        let boxes = self
            .boxes
            .iter()
            .map(|b| b.distance_to_point(p))
            .fold(f64::INFINITY, f64::min);
        let points = self
            .points
            .iter()
            .map(|s| ((p - s.center).norm() - s.radius).max(0.0))
            .fold(f64::INFINITY, f64::min);
        boxes.min(points)
    }

    /// Nearest intersection of a unit-direction ray with the world solids.
    pub fn cast_ray(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<f64> {
        let mut best = max_range;
        let mut hit = false;
        for b in &self.boxes {
            if let Some(t) = b.ray_entry(origin, dir, best) {
                if t <= best {
                    best = t;
                    hit = true;
                }
            }
        }
        for s in &self.points {
            if let Some(t) = ray_sphere(origin, dir, &s.center, s.radius) {
                if t <= best {
                    best = t;
                    hit = true;
                }
            }
        }
        hit.then_some(best)
    }
}

fn ray_sphere(origin: &Vec3, dir: &Vec3, center: &Vec3, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub yaw: f64,
}

impl Pose {
    pub fn new(position: Vec3, yaw: f64) -> Self {
        Self {
            position,
            yaw: wrap_angle(yaw),
        }
    }
}

/// Regular (azimuth, elevation) beam grid with the same angular spacing on
/// both axes. Angles are stored in degrees as configured.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarModel {
    pub horizontal_fov: f64,
    pub vertical_fov: f64,
    pub delta: f64,
    pub max_range: f64,
    #[serde(default)]
    pub pitch_mount: f64,
}

impl Default for LidarModel {
    fn default() -> Self {
        Self {
            horizontal_fov: 360.0,
            vertical_fov: 59.0,
            delta: 1.0,
            max_range: 30.0,
            pitch_mount: 0.0,
        }
    }
}

impl LidarModel {
    pub fn validate(&self) -> Result<(), WorldError> {
        let min_fov = self.horizontal_fov.min(self.vertical_fov);
        if !(self.delta > 0.0 && self.delta <= min_fov / 2.0) {
            return Err(WorldError::Lidar(format!(
                "delta {} must lie in (0, min(fov)/2 = {}]",
                self.delta,
                min_fov / 2.0
            )));
        }
        if !(self.max_range > 0.0) {
            return Err(WorldError::Lidar("max_range must be positive".into()));
        }
        if self.horizontal_fov > 360.0 + 1e-9 || self.vertical_fov >= 180.0 {
            return Err(WorldError::Lidar("field of view out of range".into()));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        (self.vertical_fov / self.delta + 1e-9).floor() as usize
    }

    pub fn cols(&self) -> usize {
        (self.horizontal_fov / self.delta + 1e-9).floor() as usize
    }

    pub fn delta_rad(&self) -> f64 {
        self.delta.to_radians()
    }

    /// True when the first and last columns are adjacent across the seam.
    pub fn wraps_azimuth(&self) -> bool {
        (self.cols() as f64 * self.delta - 360.0).abs() < 1e-9
    }

    fn azimuth(&self, col: usize) -> f64 {
        (-self.horizontal_fov / 2.0 + (col as f64 + 0.5) * self.delta).to_radians()
    }

    fn elevation(&self, row: usize) -> f64 {
        (-self.vertical_fov / 2.0 + (row as f64 + 0.5) * self.delta).to_radians()
    }

    fn sensor_to_world(&self, yaw: f64, d: &Vec3) -> Vec3 {
        let p = self.pitch_mount.to_radians();
        let (sp, cp) = p.sin_cos();
        // rotate about body y, then about world z
        let x1 = cp * d.x + sp * d.z;
        let z1 = -sp * d.x + cp * d.z;
        let (sy, cy) = yaw.sin_cos();
        Vec3::new(cy * x1 - sy * d.y, sy * x1 + cy * d.y, z1)
    }

    fn world_to_sensor(&self, yaw: f64, d: &Vec3) -> Vec3 {
        let (sy, cy) = yaw.sin_cos();
        let x1 = cy * d.x + sy * d.y;
        let y1 = -sy * d.x + cy * d.y;
        let p = self.pitch_mount.to_radians();
        let (sp, cp) = p.sin_cos();
        Vec3::new(cp * x1 - sp * d.z, y1, sp * x1 + cp * d.z)
    }

    /// Unit world-frame direction of beam `(row, col)` for a sensor yaw.
    pub fn beam_direction(&self, yaw: f64, row: usize, col: usize) -> Vec3 {
        let az = self.azimuth(col);
        let el = self.elevation(row);
        let d = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
        self.sensor_to_world(yaw, &d)
    }

    /// Sensor-frame azimuth and elevation (radians) of a world point.
    pub fn angles_of(&self, pose: &Pose, p: &Vec3) -> (f64, f64) {
        let d = self.world_to_sensor(pose.yaw, &(p - pose.position));
        let az = d.y.atan2(d.x);
        let el = d.z.atan2((d.x * d.x + d.y * d.y).sqrt());
        (az, el)
    }

    /// Whether a world point falls inside the field of view at `pose`.
    pub fn in_fov(&self, pose: &Pose, p: &Vec3) -> bool {
        let (az, el) = self.angles_of(pose, p);
        let half_h = (self.horizontal_fov / 2.0).to_radians();
        let half_v = (self.vertical_fov / 2.0).to_radians();
        (self.horizontal_fov >= 360.0 - 1e-9 || az.abs() <= half_h) && el.abs() <= half_v
    }

    /// Fractional (row, col) of a world point on the beam grid, with beam
    /// centres at integer coordinates. Columns are wrapped into `[0, cols)`
    /// for a full-circle scanner.
    pub fn grid_coords(&self, pose: &Pose, p: &Vec3) -> (f64, f64) {
        let (az, el) = self.angles_of(pose, p);
        let d = self.delta_rad();
        let mut u = (az + self.horizontal_fov.to_radians() / 2.0) / d - 0.5;
        let w = (el + self.vertical_fov.to_radians() / 2.0) / d - 0.5;
        if self.wraps_azimuth() {
            u = u.rem_euclid(self.cols() as f64);
        }
        (w, u)
    }

    /// The 2x2 beam block whose pyramidal volume contains the direction to
    /// `p`, as `[(r0,c0), (r0,c1), (r1,c0), (r1,c1)]`.
    pub fn enclosing_block(&self, pose: &Pose, p: &Vec3) -> Option<[(usize, usize); 4]> {
        let (w, u) = self.grid_coords(pose, p);
        let rows = self.rows() as i64;
        let cols = self.cols() as i64;
        let r0 = w.floor() as i64;
        let c0 = u.floor() as i64;
        if r0 < 0 || r0 + 1 >= rows {
            return None;
        }
        let c1 = if self.wraps_azimuth() {
            (c0 + 1).rem_euclid(cols)
        } else {
            if c0 < 0 || c0 + 1 >= cols {
                return None;
            }
            c0 + 1
        };
        let c0 = c0.rem_euclid(cols);
        let (r0, r1, c0, c1) = (r0 as usize, (r0 + 1) as usize, c0 as usize, c1 as usize);
        Some([(r0, c0), (r0, c1), (r1, c0), (r1, c1)])
    }
}

/// One LiDAR sweep: a row-major grid of optional world-frame hit points.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanFrame {
    pub sensor_pose: Pose,
    pub lidar: LidarModel,
    pub rows: usize,
    pub cols: usize,
    pub beams: Vec<Option<Vec3>>,
    pub timestamp: f64,
}

impl ScanFrame {
    pub fn empty(sensor_pose: Pose, lidar: LidarModel, timestamp: f64) -> Self {
        let rows = lidar.rows();
        let cols = lidar.cols();
        Self {
            sensor_pose,
            lidar,
            rows,
            cols,
            beams: vec![None; rows * cols],
            timestamp,
        }
    }

    pub fn beam(&self, row: usize, col: usize) -> Option<&Vec3> {
        self.beams[row * self.cols + col].as_ref()
    }

    pub fn range(&self, row: usize, col: usize) -> Option<f64> {
        self.beam(row, col)
            .map(|p| (p - self.sensor_pose.position).norm())
    }

    pub fn hits(&self) -> impl Iterator<Item = &Vec3> {
        self.beams.iter().flatten()
    }

    pub fn hit_count(&self) -> usize {
        self.beams.iter().filter(|b| b.is_some()).count()
    }

    /// Far end of every beam: the hit, or the point at maximum range.
    pub fn ray_ends(&self) -> Vec<Vec3> {
        let o = self.sensor_pose.position;
        (0..self.rows * self.cols)
            .map(|i| {
                self.beams[i].unwrap_or_else(|| {
                    o + self.lidar.beam_direction(self.sensor_pose.yaw, i / self.cols, i % self.cols) * self.lidar.max_range
                })
            })
            .collect()
    }
}

/// Deterministic scan of `world` from `pose`.
pub fn raycast_scan(world: &World, lidar: &LidarModel, pose: &Pose) -> Result<ScanFrame, WorldError> {
    raycast_scan_with(world, lidar, pose, 0.0, ExecMode::default())
}

pub fn raycast_scan_with(
    world: &World,
    lidar: &LidarModel,
    pose: &Pose,
    timestamp: f64,
    mode: ExecMode,
) -> Result<ScanFrame, WorldError> {
    lidar.validate()?;
    let o = pose.position;
    if !world.bounds.contains(&o) {
        return Err(WorldError::PoseOutOfBounds([o.x, o.y, o.z]));
    }
    if world.is_solid(&o) {
        return Err(WorldError::PoseInsideObstacle([o.x, o.y, o.z]));
    }
    let mut frame = ScanFrame::empty(*pose, *lidar, timestamp);
    let cols = frame.cols;
    let rows = frame.rows;
    let beams = exec::map_range(mode, rows * cols, |i| {
        let dir = lidar.beam_direction(pose.yaw, i / cols, i % cols);
        world.cast_ray(&o, &dir, lidar.max_range).map(|t| o + dir * t)
    });
    frame.beams = beams;
    Ok(frame)
}

// ---------------------------------------------------------------------------
// Scenario files

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseSpec {
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LidarSpec {
    pub hfov: f64,
    pub vfov: f64,
    pub delta_deg: f64,
    pub max_range: f64,
    #[serde(default)]
    pub pitch_mount: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointSpec {
    pub center: [f64; 3],
    pub radius: f64,
}

/// On-disk scenario layout (TOML).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub name: String,
    pub bounds: BoxSpec,
    #[serde(default)]
    pub obstacles: Vec<BoxSpec>,
    #[serde(default)]
    pub points: Vec<PointSpec>,
    pub start_pose: PoseSpec,
    pub lidar: LidarSpec,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub world: World,
    pub start_pose: Pose,
    pub lidar: LidarModel,
}

fn v(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn arr(p: &Vec3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, WorldError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            WorldError::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        Self::from_file(file)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self, WorldError> {
        let bounds = Aabb::new(v(file.bounds.min), v(file.bounds.max));
        let boxes = file
            .obstacles
            .iter()
            .map(|b| Aabb::new(v(b.min), v(b.max)))
            .collect();
        let points = file
            .points
            .iter()
            .map(|p| SolidPoint {
                center: v(p.center),
                radius: p.radius,
            })
            .collect();
        let world = World::new(file.name, bounds, boxes, points)?;
        let lidar = LidarModel {
            horizontal_fov: file.lidar.hfov,
            vertical_fov: file.lidar.vfov,
            delta: file.lidar.delta_deg,
            max_range: file.lidar.max_range,
            pitch_mount: file.lidar.pitch_mount,
        };
        lidar.validate()?;
        let start_pose = Pose::new(v(file.start_pose.position), file.start_pose.yaw);
        let o = start_pose.position;
        if !world.bounds.contains(&o) {
            return Err(WorldError::PoseOutOfBounds(arr(&o)));
        }
        if world.is_solid(&o) {
            return Err(WorldError::PoseInsideObstacle(arr(&o)));
        }
        Ok(Self {
            world,
            start_pose,
            lidar,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorldError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            name: self.world.name.clone(),
            bounds: BoxSpec {
                min: arr(&self.world.bounds.min),
                max: arr(&self.world.bounds.max),
            },
            obstacles: self
                .world
                .boxes
                .iter()
                .map(|b| BoxSpec {
                    min: arr(&b.min),
                    max: arr(&b.max),
                })
                .collect(),
            points: self
                .world
                .points
                .iter()
                .map(|p| PointSpec {
                    center: arr(&p.center),
                    radius: p.radius,
                })
                .collect(),
            start_pose: PoseSpec {
                position: arr(&self.start_pose.position),
                yaw: self.start_pose.yaw,
            },
            lidar: LidarSpec {
                hfov: self.lidar.horizontal_fov,
                vfov: self.lidar.vertical_fov,
                delta_deg: self.lidar.delta,
                max_range: self.lidar.max_range,
                pitch_mount: self.lidar.pitch_mount,
            },
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_file()).expect("scenario serializes")
    }
}

/// Loads only the world geometry of a scenario file.
pub fn load_world(path: impl AsRef<Path>) -> Result<World, WorldError> {
    Scenario::load(path).map(|s| s.world)
}

pub fn yaw_towards(from: &Vec3, to: &Vec3) -> f64 {
    let d = to - from;
    if d.x == 0.0 && d.y == 0.0 {
        0.0
    } else {
        wrap_angle(d.y.atan2(d.x))
    }
}
