//! File exports: PLY point sets, CSV tables and JSON reports.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::executor::TrajectorySample;
use crate::frontier::FrontierManager;
use crate::obsmap::{Label, ObservationMap};
use crate::pcmap::PointCloudMap;
use crate::topo::TopoGraph;

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Binary little-endian PLY of all map points as 32-bit floats, sorted for
/// stable output.
pub fn write_pointcloud_ply(path: &Path, map: &PointCloudMap) -> io::Result<()> {
    let pts = map.sorted_points();
    let mut w = create(path)?;
    write!(w, "ply\nformat binary_little_endian 1.0\nelement vertex {}\n", pts.len())?;
    write!(w, "property float x\nproperty float y\nproperty float z\nend_header\n")?;
    for p in pts {
        for c in [p.x, p.y, p.z] {
            w.write_all(&(c as f32).to_le_bytes())?;
        }
    }
    w.flush()
}

/// Colour of a label: well green, poorly red, frontier blue.
pub fn label_rgb(l: Label) -> [u8; 3] {
    match l {
        Label::Well => [40, 200, 60],
        Label::Poorly => [220, 50, 40],
        Label::Frontier => [40, 90, 230],
    }
}

/// Binary PLY of surface voxel centres with the label as colour.
pub fn write_obs_ply(path: &Path, obs: &ObservationMap) -> io::Result<()> {
    let mut v: Vec<_> = obs.voxels().collect();
    v.sort_by_key(|(k, _)| (k.x, k.y, k.z));
    let mut w = create(path)?;
    write!(w, "ply\nformat binary_little_endian 1.0\nelement vertex {}\n", v.len())?;
    write!(w, "property float x\nproperty float y\nproperty float z\n")?;
    write!(w, "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n")?;
    for (k, l) in v {
        let c = obs.center(&k);
        for x in [c.x, c.y, c.z] {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
        w.write_all(&label_rgb(l))?;
    }
    w.flush()
}

/// One row per frontier cluster.
pub fn write_frontiers_csv(path: &Path, frontiers: &FrontierManager) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "id,cx,cy,cz,voxels,min_x,min_y,min_z,max_x,max_y,max_z")?;
    for c in frontiers.clusters() {
        let (p, b) = (c.centroid, c.aabb);
        writeln!(
            w,
            "{},{:.3},{:.3},{:.3},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
            c.id,
            p.x,
            p.y,
            p.z,
            c.voxels.len(),
            b.min.x,
            b.min.y,
            b.min.z,
            b.max.x,
            b.max.y,
            b.max.z
        )?;
    }
    w.flush()
}

/// Vertices and edges as two CSV files.
pub fn write_graph_csv(vertices: &Path, edges: &Path, graph: &TopoGraph) -> io::Result<()> {
    let mut w = create(vertices)?;
    writeln!(w, "id,kind,x,y,z")?;
    for v in graph.vertices() {
        writeln!(w, "{},{:?},{:.3},{:.3},{:.3}", v.id, v.kind, v.position.x, v.position.y, v.position.z)?;
    }
    w.flush()?;
    let mut w = create(edges)?;
    writeln!(w, "a,b,length,routed,waypoints")?;
    for e in graph.edges() {
        writeln!(w, "{},{},{:.4},{},{}", e.a, e.b, e.length, e.routed, e.path.len())?;
    }
    w.flush()
}

pub fn write_trajectory_csv(path: &Path, traj: &[TrajectorySample]) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "t,x,y,z,yaw")?;
    for s in traj {
        writeln!(w, "{:.2},{:.4},{:.4},{:.4},{:.5}", s.t, s.x, s.y, s.z, s.yaw)?;
    }
    w.flush()
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()
}
