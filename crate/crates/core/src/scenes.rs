//! Parametric scene generators.
//!
//! Every solid face sits at a coordinate `≡ 0.2 (mod 0.4)`, i.e. on the
//! centre plane of a 0.4 m voxel layer, so surfaces never straddle voxel
//! boundaries at the default resolution.

use crate::geom::{Aabb, Vec3};
use crate::world::{LidarModel, Pose, Scenario, World};

/// Names accepted by [`by_name`].
pub const SCENE_NAMES: [&str; 6] = ["empty_world", "empty_room", "pillar_garage", "two_room_cave", "sealed_annex", "split_room"];

/// Rounds away float noise from sums such as `0.2 + 12.0 + 0.2`.
fn snap(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn bx(min: [f64; 3], max: [f64; 3]) -> Aabb {
    let [a, b] = [min, max].map(|m| Vec3::new(snap(m[0]), snap(m[1]), snap(m[2])));
    Aabb::new(a, b)
}

/// Floor, ceiling and four walls around the interior
/// `[0.2, 0.2 + lx] × [0.2, 0.2 + ly] × [0.2, 3.8]`; walls are 0.2 m thick
/// inside the bounds `[0, 0.4 + lx] × [0, 0.4 + ly] × [0, 4.0]`.
pub fn room_shell(lx: f64, ly: f64) -> (Aabb, Vec<Aabb>) {
    let (x1, y1) = (0.2 + lx, 0.2 + ly);
    let (xo, yo) = (x1 + 0.2, y1 + 0.2);
    let bounds = bx([0.0, 0.0, 0.0], [xo, yo, 4.0]);
    let boxes = vec![
        bx([0.0, 0.0, 0.0], [xo, yo, 0.2]),
        bx([0.0, 0.0, 3.8], [xo, yo, 4.0]),
        bx([0.0, 0.0, 0.2], [0.2, yo, 3.8]),
        bx([x1, 0.0, 0.2], [xo, yo, 3.8]),
        bx([0.2, 0.0, 0.2], [x1, 0.2, 3.8]),
        bx([0.2, y1, 0.2], [x1, yo, 3.8]),
    ];
    (bounds, boxes)
}

/// Full-height column with footprint `[x0, x1] × [y0, y1]`.
fn column(x0: f64, y0: f64, x1: f64, y1: f64) -> Aabb {
    bx([x0, y0, 0.2], [x1, y1, 3.8])
}

fn scenario(name: &str, bounds: Aabb, boxes: Vec<Aabb>, start: Vec3) -> Scenario {
    Scenario {
        world: World::new(name, bounds, boxes, vec![]).expect("generated scene is valid"),
        start_pose: Pose::new(start, 0.0),
        lidar: LidarModel::default(),
    }
}

/// 20 × 20 × 5 m of open space.
pub fn empty_world() -> Scenario {
    scenario(
        "empty_world",
        bx([0.0, 0.0, 0.0], [20.0, 20.0, 5.0]),
        vec![],
        Vec3::new(10.0, 10.0, 2.5),
    )
}

/// A closed 12 × 12 m room.
pub fn empty_room() -> Scenario {
    let (bounds, boxes) = room_shell(12.0, 12.0);
    scenario("empty_room", bounds, boxes, Vec3::new(3.0, 3.0, 2.0))
}

/// 80 × 60 m garage with a 7 × 5 grid of 0.8 m pillars on a 10 m pitch.
pub fn pillar_garage() -> Scenario {
    let (bounds, mut boxes) = room_shell(80.0, 60.0);
    for i in 1..=7 {
        for j in 1..=5 {
            let x = 10.0 * i as f64 - 0.2;
            let y = 10.0 * j as f64 - 0.2;
            boxes.push(column(x, y, x + 0.8, y + 0.8));
        }
    }
    scenario("pillar_garage", bounds, boxes, Vec3::new(5.0, 5.0, 2.0))
}

/// Two rooms joined by a 3.6 m wide, 4.8 m long tunnel, inside
/// 22.4 × 33 × 4.1 m bounds, with a few rock columns.
pub fn two_room_cave() -> Scenario {
    let bounds = bx([0.0, 0.0, 0.0], [22.4, 33.0, 4.1]);
    let mut boxes = vec![
        bx([0.0, 0.0, 0.0], [22.4, 33.0, 0.2]),
        bx([0.0, 0.0, 3.8], [22.4, 33.0, 4.1]),
        bx([0.0, 0.0, 0.2], [0.2, 33.0, 3.8]),
        bx([22.2, 0.0, 0.2], [22.4, 33.0, 3.8]),
        bx([0.2, 0.0, 0.2], [22.2, 0.2, 3.8]),
        bx([0.2, 32.6, 0.2], [22.2, 33.0, 3.8]),
        // rock band with the tunnel at x ∈ [9.4, 13.0]
        column(0.2, 14.6, 9.4, 19.4),
        column(13.0, 14.6, 22.2, 19.4),
    ];
    boxes.extend([
        column(5.0, 4.6, 7.4, 6.2),
        column(15.0, 8.2, 16.6, 10.6),
        column(6.2, 24.2, 8.6, 25.8),
        column(14.6, 27.0, 16.2, 29.4),
    ]);
    scenario("two_room_cave", bounds, boxes, Vec3::new(4.0, 10.0, 2.0))
}

/// A 20 × 16 m room containing a closed 6 × 6 m annex with no openings.
pub fn sealed_annex() -> Scenario {
    let (bounds, mut boxes) = room_shell(20.0, 16.0);
    boxes.extend([
        column(12.2, 6.2, 18.2, 6.6),
        column(12.2, 11.8, 18.2, 12.2),
        column(12.2, 6.6, 12.6, 11.8),
        column(17.8, 6.6, 18.2, 11.8),
    ]);
    scenario("sealed_annex", bounds, boxes, Vec3::new(4.0, 4.0, 2.0))
}

/// A 12 × 8 m room cut by a wall with a 2.4 m doorway.
pub fn split_room() -> Scenario {
    let (bounds, mut boxes) = room_shell(12.0, 8.0);
    boxes.extend([column(6.2, 0.2, 6.6, 3.0), column(6.2, 5.4, 6.6, 8.2)]);
    scenario("split_room", bounds, boxes, Vec3::new(3.0, 4.2, 2.0))
}

pub fn by_name(name: &str) -> Option<Scenario> {
    Some(match name {
        "empty_world" => empty_world(),
        "empty_room" => empty_room(),
        "pillar_garage" => pillar_garage(),
        "two_room_cave" => two_room_cave(),
        "sealed_annex" => sealed_annex(),
        "split_room" => split_room(),
        _ => return None,
    })
}
