use pcx_core::config::PcMapConfig;
use pcx_core::geom::point_segment_distance;
use pcx_core::pcmap::PointCloudMap;
use pcx_core::scenes;
use pcx_core::world::{raycast_scan, Pose};
use pcx_core::Vec3;
use proptest::prelude::*;

fn cloud() -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec((-4.0..4.0f64, -4.0..4.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z)), 1..200)
}

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

/// Keeps a point unless an already kept point of the same cell is closer
/// than the spacing; quadratic scan over all kept points.
fn dedup_oracle(points: &[Vec3], cell: f64, spacing: f64) -> Vec<Vec3> {
    let key = |p: &Vec3| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64);
    let mut kept: Vec<Vec3> = Vec::new();
    for p in points {
        if !kept.iter().any(|q| key(q) == key(p) && (q - p).norm() < spacing) {
            kept.push(*p);
        }
    }
    kept
}

fn sorted(mut v: Vec<Vec3>) -> Vec<[u64; 3]> {
    let mut out: Vec<[u64; 3]> = v.drain(..).map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]).collect();
    out.sort_unstable();
    out
}

#[test]
fn repeated_wall_scans_match_quadratic_dedup() {
    let s = scenes::empty_room();
    let cfg = PcMapConfig::default();
    let mut m = PointCloudMap::new(cfg.clone());
    let p1 = Pose::new(Vec3::new(3.0, 3.0, 2.0), 0.0);
    let p2 = Pose::new(Vec3::new(3.3, 3.1, 2.1), 0.2);
    let f1 = raycast_scan(&s.world, &s.lidar, &p1).unwrap();
    let f2 = raycast_scan(&s.world, &s.lidar, &p2).unwrap();
    let r1 = m.insert_frame(&f1);
    let r2 = m.insert_frame(&f2);
    assert!(r2.inserted < r1.inserted);
    let all: Vec<Vec3> = f1.hits().chain(f2.hits()).copied().collect();
    let oracle = dedup_oracle(&all, cfg.cell_size, cfg.min_point_spacing);
    assert_eq!(m.point_count(), oracle.len());
    assert_eq!(sorted(m.points().copied().collect()), sorted(oracle));
    assert_eq!(r1.inserted + r2.inserted, m.point_count());
}

#[test]
fn touched_and_new_cells_are_consistent() {
    let s = scenes::split_room();
    let mut m = PointCloudMap::new(PcMapConfig::default());
    let f = raycast_scan(&s.world, &s.lidar, &s.start_pose).unwrap();
    let r = m.insert_frame(&f);
    assert_eq!(r.touched, r.new_cells);
    let r2 = m.insert_frame(&f);
    assert!(r2.new_cells.is_empty());
    assert_eq!(r2.inserted, 0);
    let counts: usize = m.occupied_cells().map(|k| m.cell_points(k).len()).sum();
    assert_eq!(counts, m.point_count());
    for k in m.occupied_cells() {
        for p in m.cell_points(k) {
            assert_eq!(m.cell_key(p), *k);
        }
    }
}

#[test]
fn hit_points_are_within_spacing_after_insert() {
    let s = scenes::two_room_cave();
    let mut m = PointCloudMap::new(PcMapConfig::default());
    let f = raycast_scan(&s.world, &s.lidar, &s.start_pose).unwrap();
    m.insert_frame(&f);
    for p in f.hits().step_by(37) {
        assert!(m.nearest_distance(p) <= m.config().min_point_spacing);
    }
}

#[test]
fn memory_accounting_grows_with_content() {
    let mut m = PointCloudMap::new(PcMapConfig::default());
    let empty = m.memory_bytes();
    m.insert_points([Vec3::new(0.1, 0.1, 0.1)]);
    let one = m.memory_bytes();
    m.insert_points([Vec3::new(0.3, 0.1, 0.1)]);
    let two = m.memory_bytes();
    assert!(empty < one && one < two);
    assert_eq!(two - one, std::mem::size_of::<Vec3>());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn nearest_matches_linear_scan(pts in cloud(), qs in prop::collection::vec(vec3(7.0), 1..20)) {
        let mut m = PointCloudMap::new(PcMapConfig::default());
        m.insert_points(pts.iter().copied());
        let stored: Vec<Vec3> = m.points().copied().collect();
        for q in &qs {
            let oracle = stored.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min).min(5.0);
            prop_assert!((m.nearest_distance(q) - oracle).abs() < 1e-9);
            for p in stored.iter().take(5) {
                prop_assert!(m.nearest_distance(q) <= (p - q).norm() + 1e-12);
            }
        }
    }

    #[test]
    fn segment_clear_matches_exact_distance(pts in cloud(), a in vec3(5.0), b in vec3(5.0), c in 0.05..1.5f64) {
        let mut m = PointCloudMap::new(PcMapConfig::default());
        m.insert_points(pts.iter().copied());
        let dmin = m.points().map(|p| point_segment_distance(p, &a, &b)).fold(f64::INFINITY, f64::min);
        prop_assume!((dmin - c).abs() > 1e-9);
        prop_assert_eq!(m.segment_clear(&a, &b, c), dmin >= c);
    }

    #[test]
    fn segment_clear_is_monotone_in_clearance(pts in cloud(), a in vec3(5.0), b in vec3(5.0), c in 0.05..1.5f64, f in 0.0..1.0f64) {
        let mut m = PointCloudMap::new(PcMapConfig::default());
        m.insert_points(pts.iter().copied());
        if m.segment_clear(&a, &b, c) {
            prop_assert!(m.segment_clear(&a, &b, c * f + 1e-6));
        }
    }

    #[test]
    fn cell_tests_are_conservative(pts in cloud(), a in vec3(5.0), b in vec3(5.0), c in 0.05..1.5f64) {
        let mut m = PointCloudMap::new(PcMapConfig::default());
        m.insert_points(pts.iter().copied());
        if m.segment_cells_clear(&a, &b, c) {
            prop_assert!(m.segment_clear(&a, &b, c));
        }
        prop_assert!(m.cell_clearance(&a, 5.0) <= m.nearest_distance(&a) + 1e-12);
        // exact oracle over cell boxes
        let dmin = m.occupied_cells().map(|k| m.cell_box(k).segment_distance(&a, &b)).fold(f64::INFINITY, f64::min);
        prop_assume!((dmin - c).abs() > 1e-9);
        prop_assert_eq!(m.segment_cells_clear(&a, &b, c), dmin >= c);
    }

    #[test]
    fn insert_matches_dedup_oracle(pts in cloud()) {
        let cfg = PcMapConfig::default();
        let mut m = PointCloudMap::new(cfg.clone());
        m.insert_points(pts.iter().copied());
        let oracle = dedup_oracle(&pts, cfg.cell_size, cfg.min_point_spacing);
        prop_assert_eq!(sorted(m.points().copied().collect()), sorted(oracle));
    }
}
