//! Observation map: a spatial hash over surface voxels only, storing whether
//! each patch has been seen close enough and head-on enough.
//!
//! A voxel is well observed once a scan sees it within `max_distance` and the
//! four beams bounding its pyramidal volume have mutually similar ranges.
//! For a flat patch and two beams separated by `δ`, the incidence angle θ
//! satisfies `cot θ = (l2 − l1 cos δ) / (l1 sin δ)`, so the range ratio
//! `min/max` falls as the view grows more grazing.

use rustc_hash::{FxHashMap, FxHashSet};
use thiserror::Error;

use crate::config::{ObsConfig, RayPairs};
use crate::geom::{Aabb, Vec3, VoxelKey};
use crate::world::ScanFrame;

#[derive(Debug, Error, PartialEq)]
pub enum ObsError {
    #[error("beam ranges must be positive, got {0} and {1}")]
    NonPositiveRange(f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Label {
    Poorly = 0,
    Well = 1,
    Frontier = 2,
}

impl Label {
    fn from_u8(v: u8) -> Self {
        match v {
            1 => Label::Well,
            2 => Label::Frontier,
            _ => Label::Poorly,
        }
    }
}

pub fn distance_ok(p_l: &Vec3, p_s: &Vec3, max_distance: f64) -> bool {
    (p_l - p_s).norm() <= max_distance
}

/// Ratio test between two adjacent beam ranges.
pub fn view_ratio_ok(l1: f64, l2: f64, threshold: f64) -> Result<bool, ObsError> {
    if !(l1 > 0.0 && l2 > 0.0) {
        return Err(ObsError::NonPositiveRange(l1, l2));
    }
    Ok(l1.min(l2) / l1.max(l2) > threshold)
}

/// Angle (radians, in `(0, π)`) at the farther hit point between its beam
/// and the surface through both hit points, for beams `delta` radians
/// apart.
pub fn incidence_angle(l1: f64, l2: f64, delta: f64) -> f64 {
    let (l1, l2) = (l1.min(l2), l1.max(l2));
    let cot = (l2 - l1 * delta.cos()) / (l1 * delta.sin());
    (1.0 / cot).atan().rem_euclid(std::f64::consts::PI)
}

/// Whether the four beams at `(row..=row+1, col..=col+1)` mutually pass the
/// ratio test. Missing hits cannot certify the patch.
pub fn volume_view_ok(frame: &ScanFrame, row: usize, col: usize, threshold: f64, pairs: RayPairs) -> bool {
    if row + 1 >= frame.rows {
        return false;
    }
    let c1 = if col + 1 < frame.cols {
        col + 1
    } else if frame.lidar.wraps_azimuth() {
        0
    } else {
        return false;
    };
    let cells = [(row, col), (row, c1), (row + 1, col), (row + 1, c1)];
    block_ok(frame, &cells, threshold, pairs)
}

fn block_ok(frame: &ScanFrame, cells: &[(usize, usize); 4], threshold: f64, pairs: RayPairs) -> bool {
    let mut r = [0.0; 4];
    for (i, &(rr, cc)) in cells.iter().enumerate() {
        match frame.range(rr, cc) {
            Some(l) if l > 0.0 => r[i] = l,
            _ => return false,
        }
    }
    // corner order: 0=(r0,c0) 1=(r0,c1) 2=(r1,c0) 3=(r1,c1)
    const ALL: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    const EDGES: [(usize, usize); 4] = [(0, 1), (0, 2), (1, 3), (2, 3)];
    let list: &[(usize, usize)] = match pairs {
        RayPairs::All => &ALL,
        RayPairs::EdgeAdjacent => &EDGES,
    };
    list.iter()
        .all(|&(i, j)| r[i].min(r[j]) / r[i].max(r[j]) > threshold)
}

/// Result of one frame's observation update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObsUpdate {
    /// Voxels hit by the frame, in first-hit order, without duplicates.
    pub queue: Vec<VoxelKey>,
    /// Voxels promoted to well observed, with whether they were frontiers.
    pub became_well: Vec<(VoxelKey, bool)>,
    /// Voxels seen for the first time.
    pub created: Vec<VoxelKey>,
}

#[derive(Clone, Debug)]
pub struct ObservationMap {
    cfg: ObsConfig,
    labels: FxHashMap<VoxelKey, u8>,
    normals: FxHashMap<VoxelKey, Vec3>,
}

impl ObservationMap {
    pub fn new(cfg: ObsConfig) -> Self {
        Self {
            cfg,
            labels: FxHashMap::default(),
            normals: FxHashMap::default(),
        }
    }

    pub fn config(&self) -> &ObsConfig {
        &self.cfg
    }

    pub fn res(&self) -> f64 {
        self.cfg.res
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn key(&self, p: &Vec3) -> VoxelKey {
        VoxelKey::from_point(p, &Vec3::zeros(), self.cfg.res)
    }

    pub fn center(&self, k: &VoxelKey) -> Vec3 {
        k.center(&Vec3::zeros(), self.cfg.res)
    }

    pub fn voxel_box(&self, k: &VoxelKey) -> Aabb {
        k.cell_box(&Vec3::zeros(), self.cfg.res)
    }

    pub fn label(&self, k: &VoxelKey) -> Option<Label> {
        self.labels.get(k).map(|v| Label::from_u8(*v))
    }

    pub fn normal(&self, k: &VoxelKey) -> Option<&Vec3> {
        self.normals.get(k)
    }

    pub fn voxels(&self) -> impl Iterator<Item = (VoxelKey, Label)> + '_ {
        self.labels.iter().map(|(k, v)| (*k, Label::from_u8(*v)))
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.values().filter(|v| **v == label as u8).count()
    }

    pub fn has_well_neighbor(&self, k: &VoxelKey) -> bool {
        k.neighbors26()
            .any(|n| self.labels.get(&n) == Some(&(Label::Well as u8)))
    }

    /// Marks a poorly observed voxel as frontier with the given normal.
    pub fn set_frontier(&mut self, k: VoxelKey, normal: Vec3) {
        self.labels.insert(k, Label::Frontier as u8);
        self.normals.insert(k, normal);
    }

    pub fn update_observation(&mut self, frame: &ScanFrame) -> ObsUpdate {
        let mut out = ObsUpdate::default();
        let mut seen = FxHashSet::default();
        for p in frame.hits() {
            let k = self.key(p);
            if seen.insert(k) {
                out.queue.push(k);
            }
        }
        let sensor = frame.sensor_pose.position;
        for k in &out.queue {
            let prev = self.labels.get(k).copied();
            if prev == Some(Label::Well as u8) {
                continue;
            }
            if prev.is_none() {
                out.created.push(*k);
            }
            let c = self.center(k);
            let good = distance_ok(&sensor, &c, self.cfg.max_distance)
                && frame
                    .lidar
                    .enclosing_block(&frame.sensor_pose, &c)
                    .is_some_and(|cells| block_ok(frame, &cells, self.cfg.ratio_threshold, self.cfg.ray_pairs));
            if good {
                let was_frontier = prev == Some(Label::Frontier as u8);
                self.labels.insert(*k, Label::Well as u8);
                if was_frontier {
                    self.normals.remove(k);
                }
                out.became_well.push((*k, was_frontier));
            } else if prev.is_none() {
                // frontiers stay frontiers: their label already means
                // "poorly observed with a well-observed neighbour"
                self.labels.insert(*k, Label::Poorly as u8);
            }
        }
        out
    }

    pub fn per_entry_bytes() -> usize {
        std::mem::size_of::<(VoxelKey, u8)>() + 1
    }

    pub fn per_normal_bytes() -> usize {
        std::mem::size_of::<(VoxelKey, Vec3)>() + 1
    }

    pub fn fixed_bytes() -> usize {
        std::mem::size_of::<Self>()
    }

    /// Storage by accounting identity: fixed header plus, per stored entry,
    /// the key/value pair and one hash control byte.
    pub fn memory_bytes(&self) -> usize {
        Self::fixed_bytes()
            + self.labels.len() * Self::per_entry_bytes()
            + self.normals.len() * Self::per_normal_bytes()
    }
}
