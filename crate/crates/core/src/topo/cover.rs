//! Free-space coverage of a region by collision-free spheres, and sphere
//! connectivity clustering.

use serde::Serialize;

use crate::config::OverlapMeasure;
use crate::geom::{Aabb, Vec3};
use crate::unionfind::UnionFind;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
}

impl Sphere {
    pub fn contains_box(&self, b: &Aabb) -> bool {
        b.farthest_distance(&self.center) <= self.radius
    }
}

/// Recursive sphere cover of `region`. `clearance(p, cap)` must return the
/// free radius at `p`, saturated at `cap`.
///
/// For each sub-box, a sphere is placed at its centre. If it swallows the
/// sub-box the branch ends. If it is wider than `safety` it is kept and the
/// rest of the sub-box is cut along the faces of the sphere's inscribed
/// cube; otherwise it is dropped and the sub-box is split into octants.
/// Sub-boxes whose longest side is below `safety` are not explored.
pub fn cover_region<F>(region: &Aabb, clearance: F, safety: f64, cap: f64) -> Vec<Sphere>
where
    F: Fn(&Vec3, f64) -> f64,
{
    let mut out = Vec::new();
    let mut stack = vec![*region];
    while let Some(b) = stack.pop() {
        if b.is_empty() || b.max_side() < safety {
            continue;
        }
        let c = b.center();
        let r = clearance(&c, cap).min(cap);
        let s = Sphere { center: c, radius: r };
        if s.contains_box(&b) {
            if r >= safety {
                out.push(s);
            }
            continue;
        }
        let mut children = Vec::with_capacity(26);
        if r > safety {
            out.push(s);
            let h = r / 3f64.sqrt();
            let mut cuts = [[0.0; 4]; 3];
            for a in 0..3 {
                cuts[a] = [b.min[a], (c[a] - h).max(b.min[a]), (c[a] + h).min(b.max[a]), b.max[a]];
            }
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        if i == 1 && j == 1 && k == 1 {
                            continue;
                        }
                        let lo = Vec3::new(cuts[0][i], cuts[1][j], cuts[2][k]);
                        let hi = Vec3::new(cuts[0][i + 1], cuts[1][j + 1], cuts[2][k + 1]);
                        if hi.x > lo.x && hi.y > lo.y && hi.z > lo.z {
                            children.push(Aabb::new(lo, hi));
                        }
                    }
                }
            }
        } else {
            for i in 0..8 {
                let pick = |bit: usize, a: usize| if i & bit == 0 { (b.min[a], c[a]) } else { (c[a], b.max[a]) };
                let (x0, x1) = pick(1, 0);
                let (y0, y1) = pick(2, 1);
                let (z0, z1) = pick(4, 2);
                children.push(Aabb::new(Vec3::new(x0, y0, z0), Vec3::new(x1, y1, z1)));
            }
        }
        // reverse so that the first child is processed first
        stack.extend(children.into_iter().rev());
    }
    out
}

pub fn overlap(a: &Sphere, b: &Sphere, measure: OverlapMeasure) -> f64 {
    let d = (a.center - b.center).norm();
    match measure {
        OverlapMeasure::Penetration => a.radius + b.radius - d,
        OverlapMeasure::CircleRadius => {
            if d >= a.radius + b.radius {
                return 0.0;
            }
            if d <= (a.radius - b.radius).abs() {
                return a.radius.min(b.radius);
            }
            let x = (d * d + a.radius * a.radius - b.radius * b.radius) / (2.0 * d);
            (a.radius * a.radius - x * x).max(0.0).sqrt()
        }
    }
}

pub fn spheres_connected(a: &Sphere, b: &Sphere, safety: f64, measure: OverlapMeasure) -> bool {
    overlap(a, b, measure) > safety
}

/// Union-find over all sphere pairs whose intersection size exceeds `safety`.
/// Returns index groups ordered by smallest member.
pub fn cluster_spheres(spheres: &[Sphere], safety: f64, measure: OverlapMeasure) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(spheres.len());
    for i in 0..spheres.len() {
        for j in i + 1..spheres.len() {
            if spheres_connected(&spheres[i], &spheres[j], safety, measure) {
                uf.union(i, j);
            }
        }
    }
    uf.groups()
}
