//! Exploration planning for LiDAR-equipped UAVs working directly on the
//! accumulated point cloud: an observation-quality surface map, frontier
//! clustering, an incremental topological graph over free space and a
//! hierarchical global planner, driven by a raycasting simulator.

pub mod bench;
pub mod config;
pub mod exec;
pub mod executor;
pub mod export;
pub mod frontier;
pub mod geom;
pub mod memory;
pub mod obsmap;
pub mod pcmap;
pub mod planner;
pub mod scenes;
pub mod topo;
pub mod unionfind;
pub mod world;

pub use config::Config;
pub use geom::{Aabb, Vec3, VoxelKey};
