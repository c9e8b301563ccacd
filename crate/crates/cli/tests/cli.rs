use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pcx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcx"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn pcx")
}

fn ok(args: &[&str]) -> String {
    let o = pcx(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn scene_list_and_export() {
    let out = ok(&["scene", "--list"]);
    let names: Vec<&str> = out.lines().collect();
    assert_eq!(names, pcx_core::scenes::SCENE_NAMES);

    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("sub/garage.toml");
    ok(&["scene", "pillar_garage", "--out", s(&f)]);
    let back = pcx_core::world::Scenario::load(&f).unwrap();
    assert_eq!(back.world, pcx_core::scenes::pillar_garage().world);

    let o = pcx(&["scene", "nowhere"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown scene"));
}

#[test]
fn explore_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("room.toml");
    ok(&["scene", "empty_room", "--out", s(&scen)]);
    let run = dir.path().join("run");
    ok(&["explore", "--scenario", s(&scen), "--out", s(&run), "--export-maps"]);

    let r = json(&run.join("report.json"));
    assert_eq!(r["status"], "finished");
    let traj = r["trajectory"].as_array().unwrap();
    let csv = fs::read_to_string(run.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), traj.len() + 1);
    assert_eq!(r["cycle_times_ms"].as_array().unwrap().len(), r["cycles"].as_u64().unwrap() as usize);

    // binary PLY: header then 12 bytes per vertex
    let ply = fs::read(run.join("pointcloud.ply")).unwrap();
    let end = ply.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
    let header = String::from_utf8_lossy(&ply[..end]);
    let n: usize = header.lines().find_map(|l| l.strip_prefix("element vertex ")).unwrap().parse().unwrap();
    assert!(n > 0);
    assert_eq!(ply.len() - end, 12 * n);

    let verts = fs::read_to_string(run.join("graph_vertices.csv")).unwrap();
    assert_eq!(verts.lines().count(), r["graph_vertices"].as_u64().unwrap() as usize + 1);
    let edges = fs::read_to_string(run.join("graph_edges.csv")).unwrap();
    assert_eq!(edges.lines().count(), r["graph_edges"].as_u64().unwrap() as usize + 1);
    let fr = fs::read_to_string(run.join("frontiers.csv")).unwrap();
    assert_eq!(fr.lines().count(), r["remaining_clusters"].as_u64().unwrap() as usize + 1);
    assert!(run.join("observation.ply").exists());

    // cycle stats recomputed from the report
    let st = dir.path().join("cycles.json");
    ok(&["bench", "cycles", "--report", s(&run.join("report.json")), "--out", s(&st)]);
    let c = json(&st);
    let times: Vec<f64> = r["cycle_times_ms"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    assert_eq!(c["count"].as_u64().unwrap() as usize, times.len());
    assert!((c["avg_ms"].as_f64().unwrap() - mean).abs() < 1e-9);

    // memory replay of the recorded flight
    let mem = dir.path().join("mem.json");
    ok(&["bench", "memory", "--scene", "empty_room", "--trajectory", s(&run.join("trajectory.csv")), "--out", s(&mem)]);
    let m = json(&mem);
    assert_eq!(m["series"].as_array().unwrap().len(), traj.len());
    let rows = fs::read_to_string(dir.path().join("mem.csv")).unwrap();
    assert_eq!(rows.lines().count(), traj.len() + 1);

    // single-threaded run flies the same trajectory
    let seq = dir.path().join("seq");
    ok(&["--sequential", "explore", "--scene", "empty_room", "--out", s(&seq)]);
    assert_eq!(fs::read_to_string(seq.join("trajectory.csv")).unwrap(), csv);
}

#[test]
fn multigoal_bench_reports_selected_methods() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mg.json");
    ok(&["bench", "multigoal", "--scene", "two_room_cave", "--goals", "3", "--methods", "tg,og", "--out", s(&out)]);
    let r = json(&out);
    let methods = r["methods"].as_array().unwrap();
    assert_eq!(methods.len(), 2);
    assert_eq!(methods[0]["method"], "TG");
    assert_eq!(methods[1]["method"], "OG");
    assert_eq!(r["goals"].as_array().unwrap().len(), 3);
    let csv = fs::read_to_string(dir.path().join("mg.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[executor]\ndt = -1.0\n").unwrap();
    let o = pcx(&["explore", "--scene", "empty_room", "--config", s(&cfg), "--out", s(&dir.path().join("x"))]);
    assert!(!o.status.success());
    let o = pcx(&["explore", "--out", s(&dir.path().join("y"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--scenario or --scene"));
}
