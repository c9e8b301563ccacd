//! Memory accounting shared by the exploration report and the benchmarks.

use serde::Serialize;

use crate::geom::{Aabb, Vec3};

/// Bytes of a dense one-byte-per-cell grid covering `b` at `res`.
pub fn dense_grid_bytes(b: &Aabb, res: f64) -> usize {
    if b.is_empty() {
        return 0;
    }
    dense_grid_dims(b, res).iter().product()
}

pub fn dense_grid_dims(b: &Aabb, res: f64) -> [usize; 3] {
    let e = b.extent();
    [0, 1, 2].map(|a| ((e[a] / res - 1e-9).ceil().max(1.0)) as usize)
}

/// Box swept by the beams of a frame, clipped to `bounds`.
pub fn swept_box(sensor: &Vec3, ray_ends: &[Vec3], bounds: &Aabb) -> Aabb {
    let mut b = Aabb::from_points(std::iter::once(sensor).chain(ray_ends.iter()));
    b = b.intersection(bounds);
    b
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MemorySample {
    pub t: f64,
    pub obs_map: usize,
    pub dense_grid: usize,
    pub preallocated_grid: usize,
    pub pc_map: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_grid_counts_cells() {
        let b = Aabb::new(Vec3::zeros(), Vec3::new(4.0, 2.0, 0.4));
        assert_eq!(dense_grid_dims(&b, 0.4), [10, 5, 1]);
        assert_eq!(dense_grid_bytes(&b, 0.4), 50);
        assert_eq!(dense_grid_bytes(&Aabb::empty(), 0.4), 0);
    }
}
