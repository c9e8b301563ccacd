use pcx_core::exec::ExecMode;
use pcx_core::scenes;
use pcx_core::world::*;
use pcx_core::{Aabb, Vec3};
use proptest::prelude::*;

/// Nearest hit by intersecting the ray with each of the six face planes of
/// every box and keeping hits that land inside the face rectangle.
fn face_plane_hit(world: &World, o: &Vec3, d: &Vec3, max_range: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for b in &world.boxes {
        for axis in 0..3 {
            if d[axis].abs() < 1e-15 {
                continue;
            }
            for plane in [b.min[axis], b.max[axis]] {
                let t = (plane - o[axis]) / d[axis];
                if !(0.0..=max_range).contains(&t) {
                    continue;
                }
                let p = o + d * t;
                let inside = (0..3)
                    .filter(|a| *a != axis)
                    .all(|a| p[a] >= b.min[a] - 1e-9 && p[a] <= b.max[a] + 1e-9);
                if inside && best.is_none_or(|x| t < x) {
                    best = Some(t);
                }
            }
        }
    }
    best
}

fn on_surface(world: &World, p: &Vec3) -> bool {
    world.boxes.iter().any(|b| {
        let inside = (0..3).all(|a| p[a] >= b.min[a] - 1e-6 && p[a] <= b.max[a] + 1e-6);
        let on_face = (0..3).any(|a| (p[a] - b.min[a]).abs() < 1e-6 || (p[a] - b.max[a]).abs() < 1e-6);
        inside && on_face
    })
}

#[test]
fn garage_scan_matches_face_plane_oracle() {
    let s = scenes::pillar_garage();
    let pose = Pose::new(Vec3::new(14.3, 22.7, 1.9), 0.4);
    let f = raycast_scan(&s.world, &s.lidar, &pose).unwrap();
    let mut oracle_hits = 0;
    for r in 0..f.rows {
        for c in 0..f.cols {
            let d = s.lidar.beam_direction(pose.yaw, r, c);
            let want = face_plane_hit(&s.world, &pose.position, &d, s.lidar.max_range);
            let got = f.range(r, c);
            match (want, got) {
                (Some(w), Some(g)) => assert!((w - g).abs() < 1e-9, "beam ({r},{c}): {w} vs {g}"),
                (None, None) => {}
                other => panic!("beam ({r},{c}): {other:?}"),
            }
            oracle_hits += want.is_some() as usize;
        }
    }
    assert_eq!(f.hit_count(), oracle_hits);
}

#[test]
fn wall_at_three_metres() {
    let bounds = Aabb::new(Vec3::zeros(), Vec3::new(10.0, 10.0, 10.0));
    let wall = Aabb::new(Vec3::new(5.0, 0.0, 0.0), Vec3::new(5.2, 10.0, 10.0));
    let w = World::new("wall", bounds, vec![wall], vec![]).unwrap();
    let o = Vec3::new(2.0, 5.0, 5.0);
    assert!((w.cast_ray(&o, &Vec3::x(), 10.0).unwrap() - 3.0).abs() < 1e-9);
    assert_eq!(w.cast_ray(&o, &-Vec3::x(), 10.0), None);
}

#[test]
fn open_sky_has_no_hits() {
    let s = scenes::empty_world();
    let f = raycast_scan(&s.world, &s.lidar, &s.start_pose).unwrap();
    assert_eq!(f.hit_count(), 0);
    assert_eq!((f.rows, f.cols), (59, 360));
}

#[test]
fn scans_are_deterministic_and_mode_independent() {
    let s = scenes::two_room_cave();
    let a = raycast_scan_with(&s.world, &s.lidar, &s.start_pose, 0.0, ExecMode::Sequential).unwrap();
    let b = raycast_scan_with(&s.world, &s.lidar, &s.start_pose, 0.0, ExecMode::Parallel).unwrap();
    let c = raycast_scan_with(&s.world, &s.lidar, &s.start_pose, 0.0, ExecMode::Sequential).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn hits_lie_on_surfaces_within_range() {
    let s = scenes::two_room_cave();
    let f = raycast_scan(&s.world, &s.lidar, &s.start_pose).unwrap();
    assert!(f.hit_count() > 0);
    for p in f.hits() {
        let d = (p - s.start_pose.position).norm();
        assert!((0.0..=s.lidar.max_range).contains(&d));
        assert!(on_surface(&s.world, p), "{p:?}");
    }
}

#[test]
fn adjacent_columns_differ_by_delta() {
    let l = LidarModel::default();
    let pose = Pose::new(Vec3::zeros(), 0.0);
    for r in [0, 29, 58] {
        for c in 0..l.cols() - 1 {
            let (a0, e0) = l.angles_of(&pose, &(l.beam_direction(0.0, r, c) * 5.0));
            let (a1, e1) = l.angles_of(&pose, &(l.beam_direction(0.0, r, c + 1) * 5.0));
            let da = pcx_core::geom::wrap_angle(a1 - a0);
            assert!((da - l.delta_rad()).abs() < 1e-9);
            assert!((e1 - e0).abs() < 1e-9);
        }
    }
}

#[test]
fn pose_inside_obstacle_is_rejected() {
    let s = scenes::split_room();
    let pose = Pose::new(Vec3::new(6.4, 1.0, 2.0), 0.0);
    assert!(matches!(raycast_scan(&s.world, &s.lidar, &pose), Err(WorldError::PoseInsideObstacle(_))));
}

#[test]
fn scenario_files_roundtrip_and_count_obstacles() {
    for name in scenes::SCENE_NAMES {
        let s = scenes::by_name(name).unwrap();
        let text = s.to_toml_string();
        let count = text.lines().filter(|l| l.trim() == "[[obstacles]]").count();
        let back = Scenario::from_toml_str(&text).unwrap();
        assert_eq!(back.world.boxes.len(), count);
        assert_eq!(back.world, s.world);
        assert_eq!(back.start_pose, s.start_pose);
    }
    assert_eq!(scenes::pillar_garage().world.boxes.len(), 6 + 35);
    assert_eq!(scenes::empty_world().world.boxes.len(), 0);
}

#[test]
fn parse_errors_carry_line_numbers() {
    let text = "name = \"x\"\npoints = []\n[bounds]\nmin = [0.0, 0.0]\nmax = [1.0, 1.0, 1.0]\n";
    match Scenario::from_toml_str(text) {
        Err(WorldError::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn geometry_outside_bounds_is_rejected() {
    let bounds = Aabb::new(Vec3::zeros(), Vec3::repeat(4.0));
    let b = Aabb::new(Vec3::new(3.0, 0.0, 0.0), Vec3::new(5.0, 1.0, 1.0));
    assert!(matches!(World::new("x", bounds, vec![b], vec![]), Err(WorldError::OutOfBounds(_))));
    let flat = Aabb::new(Vec3::zeros(), Vec3::new(4.0, 4.0, 0.0));
    assert!(matches!(World::new("x", flat, vec![], vec![]), Err(WorldError::Bounds(_))));
}

#[test]
fn scene_files_on_disk_match_generators() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for name in scenes::SCENE_NAMES {
        let p = dir.join(format!("{name}.toml"));
        let s = Scenario::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(s.world, scenes::by_name(name).unwrap().world);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_rays_match_oracle(x in 1.0..79.0f64, y in 1.0..59.0f64, z in 0.5..3.5f64, th in 0.0..6.28f64, ph in -1.5..1.5f64) {
        let s = scenes::pillar_garage();
        let o = Vec3::new(x, y, z);
        prop_assume!(!s.world.is_solid(&o));
        let d = Vec3::new(ph.cos() * th.cos(), ph.cos() * th.sin(), ph.sin());
        let want = face_plane_hit(&s.world, &o, &d, 30.0);
        let got = s.world.cast_ray(&o, &d, 30.0);
        match (want, got) {
            (Some(w), Some(g)) => prop_assert!((w - g).abs() < 1e-9),
            (None, None) => {}
            other => prop_assert!(false, "{other:?}"),
        }
    }
}
