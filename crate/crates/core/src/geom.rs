//! Small geometric vocabulary shared by every map and planner.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// Integer lattice index. Used for voxel, map-cell and region keys alike; the
/// lattice origin and pitch are owned by whoever hands out the keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelKey {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl VoxelKey {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    pub fn from_point(p: &Vec3, origin: &Vec3, size: f64) -> Self {
        Self {
            x: ((p.x - origin.x) / size).floor() as i32,
            y: ((p.y - origin.y) / size).floor() as i32,
            z: ((p.z - origin.z) / size).floor() as i32,
        }
    }

    pub fn center(&self, origin: &Vec3, size: f64) -> Vec3 {
        Vec3::new(
            origin.x + (self.x as f64 + 0.5) * size,
            origin.y + (self.y as f64 + 0.5) * size,
            origin.z + (self.z as f64 + 0.5) * size,
        )
    }

    pub fn cell_box(&self, origin: &Vec3, size: f64) -> Aabb {
        let min = Vec3::new(
            origin.x + self.x as f64 * size,
            origin.y + self.y as f64 * size,
            origin.z + self.z as f64 * size,
        );
        Aabb::new(min, min + Vec3::repeat(size))
    }

    pub fn offset(&self, dx: i32, dy: i32, dz: i32) -> Self {
        Self::new(self.x + dx, self.y + dy, self.z + dz)
    }

    /// The 26 lattice neighbours (face, edge and corner adjacent).
    pub fn neighbors26(self) -> impl Iterator<Item = VoxelKey> {
        (-1..=1).flat_map(move |dx| {
            (-1..=1).flat_map(move |dy| {
                (-1..=1).filter_map(move |dz| {
                    if dx == 0 && dy == 0 && dz == 0 {
                        None
                    } else {
                        Some(self.offset(dx, dy, dz))
                    }
                })
            })
        })
    }

    /// Self plus the 26 neighbours, in lexicographic offset order.
    pub fn block27(self) -> impl Iterator<Item = VoxelKey> {
        (-1..=1).flat_map(move |dx| {
            (-1..=1).flat_map(move |dy| (-1..=1).map(move |dz| self.offset(dx, dy, dz)))
        })
    }

    pub fn chebyshev(&self, other: &VoxelKey) -> i32 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }
}

/// Axis-aligned box. An "empty" box has `min > max` on every axis and absorbs
/// nothing in intersection tests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Default for Aabb {
    fn default() -> Self {
        Self::empty()
    }
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.extend(p);
        }
        b
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn extend(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        Aabb::new(self.min.inf(&other.min), self.max.sup(&other.max))
    }

    pub fn intersection(&self, other: &Aabb) -> Aabb {
        Aabb::new(self.min.sup(&other.min), self.max.inf(&other.max))
    }

    /// Closed-interval overlap test.
    pub fn intersects(&self, other: &Aabb) -> bool {
        !self.is_empty()
            && !other.is_empty()
            && self.min.x <= other.max.x
            && self.max.x >= other.min.x
            && self.min.y <= other.max.y
            && self.max.y >= other.min.y
            && self.min.z <= other.max.z
            && self.max.z >= other.min.z
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn contains_strict(&self, p: &Vec3) -> bool {
        p.x > self.min.x
            && p.x < self.max.x
            && p.y > self.min.y
            && p.y < self.max.y
            && p.z > self.min.z
            && p.z < self.max.z
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    pub fn inflate(&self, margin: f64) -> Aabb {
        if self.is_empty() {
            return *self;
        }
        Aabb::new(self.min - Vec3::repeat(margin), self.max + Vec3::repeat(margin))
    }

    pub fn extent(&self) -> Vec3 {
        if self.is_empty() {
            Vec3::zeros()
        } else {
            self.max - self.min
        }
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn max_side(&self) -> f64 {
        self.extent().max()
    }

    pub fn half_diagonal(&self) -> f64 {
        self.extent().norm() * 0.5
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    /// Euclidean distance from `p` to the closed box (0 inside).
    pub fn distance_to_point(&self, p: &Vec3) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        let dz = (self.min.z - p.z).max(0.0).max(p.z - self.max.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Largest distance from `p` to any point of the box.
    pub fn farthest_distance(&self, p: &Vec3) -> f64 {
        let dx = (p.x - self.min.x).abs().max((p.x - self.max.x).abs());
        let dy = (p.y - self.min.y).abs().max((p.y - self.max.y).abs());
        let dz = (p.z - self.min.z).abs().max((p.z - self.max.z).abs());
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Slab test. Returns the entry distance along a unit `dir` for a ray
    /// starting outside the box; `None` on miss or when the box lies behind.
    pub fn ray_entry(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0_f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let o = origin[a];
            let d = dir[a];
            if d.abs() < 1e-300 {
                if o < self.min[a] || o > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let mut ta = (self.min[a] - o) * inv;
            let mut tb = (self.max[a] - o) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            if ta > t0 {
                t0 = ta;
            }
            if tb < t1 {
                t1 = tb;
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }

    /// Distance between the segment `ab` and the box. The distance along a
    /// line to a convex set is convex, so a golden-section search in the
    /// segment parameter converges to the exact minimum.
    pub fn segment_distance(&self, a: &Vec3, b: &Vec3) -> f64 {
        let d = b - a;
        if self.ray_entry(a, &d, 1.0).is_some() {
            return 0.0;
        }
        let f = |t: f64| self.distance_to_point(&(a + d * t));
        let g = 0.5 * (5.0_f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let mut f1 = f(x1);
        let mut f2 = f(x2);
        for _ in 0..80 {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
        f(0.0).min(f(1.0)).min(f1).min(f2)
    }
}

pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

pub fn polyline_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if r >= std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_of_point() {
        let k = VoxelKey::from_point(&Vec3::new(1.0, 2.0, 0.5), &Vec3::zeros(), 0.4);
        assert_eq!(k, VoxelKey::new(2, 5, 1));
        let k = VoxelKey::from_point(&Vec3::new(-0.1, 0.0, 0.39), &Vec3::zeros(), 0.4);
        assert_eq!(k, VoxelKey::new(-1, 0, 0));
    }

    #[test]
    fn neighbor_counts() {
        let k = VoxelKey::new(0, 0, 0);
        assert_eq!(k.neighbors26().count(), 26);
        assert_eq!(k.block27().count(), 27);
        assert!(k.neighbors26().all(|n| n.chebyshev(&k) == 1));
    }

    #[test]
    fn ray_entry_hits_wall() {
        let wall = Aabb::new(Vec3::new(3.0, -5.0, -5.0), Vec3::new(3.2, 5.0, 5.0));
        let t = wall
            .ray_entry(&Vec3::zeros(), &Vec3::new(1.0, 0.0, 0.0), 10.0)
            .unwrap();
        assert!((t - 3.0).abs() < 1e-12);
        assert!(wall
            .ray_entry(&Vec3::zeros(), &Vec3::new(-1.0, 0.0, 0.0), 10.0)
            .is_none());
        assert!(wall
            .ray_entry(&Vec3::zeros(), &Vec3::new(1.0, 0.0, 0.0), 2.0)
            .is_none());
    }

    #[test]
    fn segment_box_distance_matches_dense_sampling() {
        let b = Aabb::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0));
        let a = Vec3::new(-2.0, 3.0, 0.5);
        let c = Vec3::new(3.0, 1.5, 2.0);
        let exact = b.segment_distance(&a, &c);
        let sampled = (0..=100_000)
            .map(|i| b.distance_to_point(&(a + (c - a) * (i as f64 / 100_000.0))))
            .fold(f64::INFINITY, f64::min);
        assert!((exact - sampled).abs() < 1e-6, "{exact} vs {sampled}");
        assert_eq!(b.segment_distance(&Vec3::new(-1.0, 0.5, 0.5), &Vec3::new(2.0, 0.5, 0.5)), 0.0);
    }

    #[test]
    fn wrap_is_half_open() {
        assert!((wrap_angle(std::f64::consts::PI) + std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * std::f64::consts::PI / 2.0) + std::f64::consts::PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.0), 0.0);
    }
}
