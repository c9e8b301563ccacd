mod common;

use std::hint::black_box;
use std::time::Instant;

use common::{permutations, walk, GraphRun, Mapper};
use pcx_core::exec::ExecMode;
use pcx_core::executor::ExplorationState;
use pcx_core::frontier::{FrontierCluster, FrontierVoxel};
use pcx_core::pcmap::PointCloudMap;
use pcx_core::planner::atsp::{path_cost, solve_open_atsp};
use pcx_core::planner::*;
use pcx_core::scenes;
use pcx_core::topo::ODOM_ID;
use pcx_core::world::LidarModel;
use pcx_core::{Aabb, Config, Vec3};
use proptest::prelude::*;

fn brute_force(cost: &[Vec<f64>]) -> f64 {
    let nodes: Vec<usize> = (1..cost.len()).collect();
    permutations(&nodes)
        .iter()
        .map(|p| path_cost(cost, p))
        .fold(f64::INFINITY, f64::min)
}

fn matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=8).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(0.5..50.0f64, n), n))
}

fn is_permutation(order: &[usize], n: usize) -> bool {
    let mut o = order.to_vec();
    o.sort_unstable();
    o == (1..n).collect::<Vec<_>>()
}

fn cluster_at(centroid: Vec3, gen_pose: Vec3, gen_odometer: f64) -> FrontierCluster {
    FrontierCluster {
        id: 1,
        voxels: vec![],
        centroid,
        aabb: Aabb::empty(),
        gen_pose,
        gen_odometer,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_tour_matches_permutations(cost in matrix()) {
        let (order, c) = solve_open_atsp(&cost, 12);
        prop_assert!(is_permutation(&order, cost.len()));
        prop_assert!((c - path_cost(&cost, &order)).abs() < 1e-9);
        prop_assert!((c - brute_force(&cost)).abs() < 1e-9);
    }

    #[test]
    fn heuristic_tour_is_valid_and_bounded(cost in matrix()) {
        let (order, c) = solve_open_atsp(&cost, 0);
        prop_assert!(is_permutation(&order, cost.len()));
        prop_assert!((c - path_cost(&cost, &order)).abs() < 1e-9);
        prop_assert!(c >= brute_force(&cost) - 1e-9);
    }

    #[test]
    fn backtracking_matches_path_integral(steps in prop::collection::vec(prop::array::uniform3(-3.0..3.0f64), 1..60),
                                          born in 0usize..60, c in prop::array::uniform3(-20.0..20.0f64)) {
        let born = born.min(steps.len());
        let mut log = FlightLog::new(Vec3::zeros(), 0.5);
        let mut path = vec![Vec3::zeros()];
        let mut gen = (Vec3::zeros(), 0.0);
        for (i, s) in steps.iter().enumerate() {
            if i == born {
                gen = (log.position(), log.total());
            }
            let p = *path.last().unwrap() + Vec3::from(*s);
            log.record(p);
            path.push(p);
        }
        if born == steps.len() {
            gen = (log.position(), log.total());
        }
        let centroid = Vec3::from(c);
        let cl = cluster_at(centroid, gen.0, gen.1);
        // arc length of the flown polyline after the cluster appeared
        let flown: f64 = path[born..].windows(2).map(|w| {
            let d = w[1] - w[0];
            (d.x * d.x + d.y * d.y + d.z * d.z).sqrt()
        }).sum();
        let g = gen.0 - centroid;
        let want = flown + (g.x * g.x + g.y * g.y + g.z * g.z).sqrt();
        prop_assert!((backtracking_distance(&cl, &log) - want).abs() < 1e-9);
        // log invariants
        prop_assert!(log.samples().windows(2).all(|w| w[0].1 <= w[1].1));
        prop_assert!((log.samples().last().unwrap().1 - log.total()).abs() < 1e-12);
        prop_assert_eq!(log.samples().last().unwrap().0, *path.last().unwrap());
    }
}

#[test]
fn backtracking_cost_does_not_grow_with_flight() {
    let mut short = FlightLog::new(Vec3::zeros(), 0.5);
    short.record(Vec3::new(1.0, 0.0, 0.0));
    let mut long = FlightLog::new(Vec3::zeros(), 0.5);
    for i in 0..200_000 {
        long.record(Vec3::new(i as f64, (i % 2) as f64, 0.0));
    }
    assert!(long.samples().len() > 100_000);
    let c = cluster_at(Vec3::new(3.0, 4.0, 0.0), Vec3::zeros(), 0.0);
    let time = |log: &FlightLog| {
        let t = Instant::now();
        let mut acc = 0.0;
        for _ in 0..200_000 {
            acc += backtracking_distance(black_box(&c), black_box(log));
        }
        black_box(acc);
        t.elapsed().as_secs_f64()
    };
    let (a, b) = (time(&short).max(1e-6), time(&long).max(1e-6));
    assert!(b < 10.0 * a + 0.01, "{a} vs {b}");
}

/// Independent visibility: range, normal angle, field of view from yaw and
/// line of sight against every map point.
fn visible_oracle(vp: &Vec3, yaw: f64, f: &FrontierVoxel, map: &PointCloudMap, lidar: &LidarModel, cfg: &Config) -> bool {
    let d = vp - f.center;
    let dist = d.norm();
    if dist >= cfg.obs.max_distance || dist == 0.0 {
        return false;
    }
    if (d.dot(&f.normal) / dist).clamp(-1.0, 1.0).acos().to_degrees() >= cfg.planner.normal_angle_deg {
        return false;
    }
    let ray = -d;
    let heading = Vec3::new(yaw.cos(), yaw.sin(), 0.0);
    let flat = Vec3::new(ray.x, ray.y, 0.0);
    let az = if flat.norm() < 1e-12 { 0.0 } else { (flat.dot(&heading) / flat.norm()).clamp(-1.0, 1.0).acos().to_degrees() };
    let el = (ray.z / dist).asin().to_degrees().abs();
    if az > lidar.horizontal_fov / 2.0 || el > lidar.vertical_fov / 2.0 {
        return false;
    }
    let trim = 2.0 * cfg.obs.res;
    if dist <= trim {
        return true;
    }
    let end = f.center + d * (trim / dist);
    let seg = end - vp;
    map.points().all(|p| {
        let t = ((p - vp).dot(&seg) / seg.norm_squared()).clamp(0.0, 1.0);
        (vp + seg * t - p).norm() >= cfg.obs.res * 0.5
    })
}

#[test]
fn coverage_per_yaw_matches_exhaustive_check() {
    let s = scenes::two_room_cave();
    let mut m = Mapper::new(s.world.clone(), s.lidar, Config::default());
    m.step(&s.start_pose);
    let lidar = LidarModel {
        horizontal_fov: 120.0,
        ..LidarModel::default()
    };
    let cfg = Config::default();
    let frontiers: Vec<FrontierVoxel> = m.frontiers.clusters().flat_map(|c| c.voxels.iter().copied()).step_by(3).collect();
    assert!(frontiers.len() > 10, "{}", frontiers.len());
    let mut nonzero = 0;
    for vp in [Vec3::new(4.0, 10.0, 2.0), Vec3::new(6.0, 11.0, 1.2), Vec3::new(3.0, 8.0, 3.0)] {
        let counts = coverage_by_yaw(&vp, &frontiers, &m.pc, &lidar, &cfg);
        assert_eq!(counts.len(), cfg.planner.yaw_samples);
        for (i, got) in counts.iter().enumerate() {
            let yaw = -std::f64::consts::PI + std::f64::consts::TAU * i as f64 / counts.len() as f64;
            let want = frontiers.iter().filter(|f| visible_oracle(&vp, yaw, f, &m.pc, &lidar, &cfg)).count() as u32;
            assert_eq!(*got, want, "vp {vp:?} yaw {i}");
            nonzero += (want > 0) as usize;
        }
        let (yaw, best) = coverage_score(&vp, &frontiers, &m.pc, &lidar, &cfg);
        let first = counts.iter().position(|c| *c == *counts.iter().max().unwrap()).unwrap();
        assert_eq!(best, counts[first]);
        assert!((yaw - yaw_sample(first, counts.len())).abs() < 1e-12);
    }
    assert!(nonzero > 0);
}

#[test]
fn wall_through_centroid_gives_two_candidate_groups() {
    let mut pc = PointCloudMap::new(Default::default());
    let mut pts = Vec::new();
    for i in 0..=200 {
        for j in 0..=60 {
            pts.push(Vec3::new(10.2, i as f64 * 0.1, j as f64 * 0.1));
        }
    }
    pc.insert_points(pts);
    let bounds = Aabb::new(Vec3::zeros(), Vec3::new(20.0, 20.0, 6.0));
    let c = cluster_at(Vec3::new(10.2, 10.0, 3.0), Vec3::zeros(), 0.0);
    let groups = sample_viewpoints(&c, &pc, &bounds, &Config::default());
    assert_eq!(groups.len(), 2);
    for g in &groups {
        let side = g[0].sphere.center.x < 10.2;
        assert!(g.iter().all(|m| (m.sphere.center.x < 10.2) == side));
        for m in g {
            assert!(pc.cell_clearance(&m.sphere.center, 10.0) >= 0.8);
        }
    }
}

fn mapped_split_room() -> GraphRun {
    let s = scenes::split_room();
    let mut r = GraphRun::new(&s);
    for pose in walk(&s.world, s.start_pose.position, 16, 0.8, 1.0, 5) {
        r.step(&s, &pose);
    }
    r
}

#[test]
fn tour_matches_permutation_brute_force() {
    let mut r = mapped_split_room();
    let cfg = Config::default();
    let candidates = [
        Vec3::new(2.0, 2.0, 2.0),
        Vec3::new(9.5, 6.5, 2.0),
        Vec3::new(4.5, 6.8, 1.5),
        Vec3::new(10.5, 2.0, 2.5),
        Vec3::new(1.5, 6.5, 2.0),
        Vec3::new(8.0, 4.0, 1.2),
    ];
    let vps: Vec<Viewpoint> = candidates
        .iter()
        .enumerate()
        .map(|(i, p)| Viewpoint {
            position: *p,
            yaw: 0.0,
            coverage: 1,
            cluster_id: i as u64 + 1,
        })
        .collect();
    let before = r.graph.clone();
    let (path, _) = plan_tour(&vps, &mut r.graph, &r.pc, &cfg);
    assert!(r.graph == before);
    assert!(path.viewpoints.len() >= 3);

    // oracle: connect the same points, pairwise graph distances, best order
    let cp = r.graph.checkpoint();
    let mut ids = vec![ODOM_ID];
    for vp in &vps {
        if let Ok((id, _)) = r.graph.connect_temp_vertex(&r.pc, &vp.position) {
            if r.graph.graph_astar(ODOM_ID, id).is_some() {
                ids.push(id);
            }
        }
    }
    let n = ids.len();
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { r.graph.graph_astar(ids[i], ids[j]).map_or(f64::INFINITY, |x| x.1) }).collect())
        .collect();
    r.graph.rollback(cp);
    assert_eq!(n - 1, path.viewpoints.len());
    let best = brute_force(&cost);
    assert!((path.length - best).abs() < 1e-6, "{} vs {best}", path.length);

    // guidance path shape
    let odom = r.graph.odom().unwrap().position;
    assert_eq!(path.polyline[0], odom);
    let tol = cfg.topo.vertex_match_tol;
    let mut last = 0;
    for (vp, &i) in path.viewpoints.iter().zip(&path.arrivals) {
        assert!(i >= last);
        assert!((path.polyline[i] - vp.position).norm() <= tol);
        last = i;
    }
}

#[test]
fn plan_cycle_leaves_graph_untouched_and_picks_safe_viewpoints() {
    let s = scenes::two_room_cave();
    let cfg = Config::default();
    let mut st = ExplorationState::new(s, cfg.clone(), ExecMode::Parallel).unwrap();
    st.sense().unwrap();
    let before = st.graph.clone();
    let mut rec = CycleRecord::default();
    let out = plan_cycle(
        &mut st.frontiers,
        &mut st.graph,
        &st.pc,
        &st.scenario.lidar,
        &st.odometer,
        &st.cfg,
        ExecMode::Parallel,
        &mut rec,
    );
    assert!(st.graph == before);
    let CycleOutcome::Path(path) = out else { panic!("expected a path, got {out:?}") };
    assert!(path.viewpoints.len() <= cfg.planner.top_k);
    for vp in &path.viewpoints {
        assert!(vp.coverage >= 1);
        assert!(st.pc.cell_clearance(&vp.position, 10.0) >= cfg.topo.safety_radius);
    }
    for w in path.polyline.windows(2) {
        assert!(st.pc.segment_clear(&w[0], &w[1], cfg.topo.safety_radius - 1e-9));
    }
    // ranking follows backtracking distance
    let d: Vec<f64> = rec
        .ranked
        .iter()
        .map(|id| backtracking_distance(st.frontiers.cluster(*id).unwrap(), &st.odometer))
        .collect();
    assert!(d.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn no_active_cluster_means_finished() {
    let s = scenes::empty_world();
    let mut st = ExplorationState::new(s, Config::default(), ExecMode::Sequential).unwrap();
    st.sense().unwrap();
    let mut rec = CycleRecord::default();
    let out = plan_cycle(&mut st.frontiers, &mut st.graph, &st.pc, &st.scenario.lidar, &st.odometer, &st.cfg, ExecMode::Sequential, &mut rec);
    assert_eq!(out, CycleOutcome::Finished);
}
