use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pcx_core::bench::{self, Method};
use pcx_core::exec::ExecMode;
use pcx_core::executor::{explore, TrajectorySample};
use pcx_core::export;
use pcx_core::scenes;
use pcx_core::world::Scenario;
use pcx_core::Config;

#[derive(Parser)]
#[command(name = "pcx", version, about = "Point-cloud exploration planner and benchmarks")]
struct Cli {
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Explore a scenario until no frontier remains.
    Explore {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
        /// Also write map, frontier and graph exports.
        #[arg(long)]
        export_maps: bool,
    },
    /// Desk-scale benchmarks.
    Bench {
        #[command(subcommand)]
        kind: BenchCmd,
    },
    /// Write a built-in scene as a scenario file.
    Scene {
        /// Scene name; omit with --list.
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        list: bool,
    },
}

#[derive(Args)]
struct Input {
    /// Scenario TOML file.
    #[arg(long, conflicts_with = "scene")]
    scenario: Option<PathBuf>,
    /// Built-in scene name.
    #[arg(long)]
    scene: Option<String>,
    /// Config TOML file; defaults apply otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Tg,
    Pc,
    Og,
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Path search from a fixed start to random reachable goals.
    Multigoal {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12)]
        goals: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Tg, MethodArg::Pc, MethodArg::Og])]
        methods: Vec<MethodArg>,
    },
    /// Representation sizes while replaying a flight.
    Memory {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
        /// Trajectory CSV (t,x,y,z,yaw); an exploration run otherwise.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Planning-cycle time statistics.
    Cycles {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
        /// Exploration report JSON; an exploration run otherwise.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

impl Input {
    fn load(&self) -> Result<(Scenario, Config)> {
        let scenario = match (&self.scenario, &self.scene) {
            (Some(p), _) => Scenario::load(p).with_context(|| format!("loading {}", p.display()))?,
            (None, Some(n)) => match scenes::by_name(n) {
                Some(s) => s,
                None => bail!("unknown scene {n:?}; known: {}", scenes::SCENE_NAMES.join(", ")),
            },
            (None, None) => bail!("either --scenario or --scene is required"),
        };
        let cfg = match &self.config {
            Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => Config::default(),
        };
        Ok((scenario, cfg))
    }
}

fn with_ext(p: &Path, ext: &str) -> PathBuf {
    p.with_extension(ext)
}

fn ensure_parent(p: &Path) -> Result<()> {
    if let Some(d) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d)?;
    }
    Ok(())
}

fn read_trajectory(p: &Path) -> Result<Vec<TrajectorySample>> {
    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("{}:{}: bad number", p.display(), i + 1))?;
        if v.len() != 5 {
            bail!("{}:{}: expected t,x,y,z,yaw", p.display(), i + 1);
        }
        out.push(TrajectorySample {
            t: v[0],
            x: v[1],
            y: v[2],
            z: v[3],
            yaw: v[4],
        });
    }
    Ok(out)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mode = if cli.sequential { ExecMode::Sequential } else { ExecMode::Parallel };
    match cli.cmd {
        Cmd::Explore { input, out, export_maps } => {
            let (scenario, cfg) = input.load()?;
            cfg.validate()?;
            fs::create_dir_all(&out)?;
            let st = explore(scenario, cfg, mode)?;
            let report = st.report();
            export::write_json(&out.join("report.json"), &report)?;
            export::write_trajectory_csv(&out.join("trajectory.csv"), &report.trajectory)?;
            if export_maps {
                export::write_pointcloud_ply(&out.join("pointcloud.ply"), &st.pc)?;
                export::write_obs_ply(&out.join("observation.ply"), &st.obs)?;
                export::write_frontiers_csv(&out.join("frontiers.csv"), &st.frontiers)?;
                export::write_graph_csv(&out.join("graph_vertices.csv"), &out.join("graph_edges.csv"), &st.graph)?;
            }
            println!(
                "{:?}: {:.1} s simulated, {:.1} m flown, {} planning cycles",
                report.status, report.exploration_time, report.path_length, report.cycles
            );
        }
        Cmd::Bench { kind } => run_bench(kind, mode)?,
        Cmd::Scene { name, out, list } => {
            if list || name.is_none() {
                for n in scenes::SCENE_NAMES {
                    println!("{n}");
                }
                return Ok(());
            }
            let name = name.expect("checked above");
            let Some(s) = scenes::by_name(&name) else {
                bail!("unknown scene {name:?}; known: {}", scenes::SCENE_NAMES.join(", "));
            };
            let text = s.to_toml_string();
            match out {
                Some(p) => {
                    ensure_parent(&p)?;
                    fs::write(&p, text)?;
                }
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn run_bench(kind: BenchCmd, mode: ExecMode) -> Result<()> {
    match kind {
        BenchCmd::Multigoal {
            input,
            out,
            goals,
            seed,
            methods,
        } => {
            let (s, cfg) = input.load()?;
            let methods: Vec<Method> = methods
                .iter()
                .map(|m| match m {
                    MethodArg::Tg => Method::TG,
                    MethodArg::Pc => Method::PC,
                    MethodArg::Og => Method::OG,
                })
                .collect();
            let start = s.start_pose.position;
            let safety = cfg.topo.safety_radius;
            let pitch = cfg.topo.astar_pitch;
            let positions = bench::lawnmower(&s.world, 2.0 * cfg.topo.region_size, 2.0, start.z, safety + 0.2);
            let mut mapped = bench::map_by_scans(&s.world, &s.lidar, &positions, &cfg, mode)?;
            let reach = bench::free_flood_fill(&s.world, &start, pitch, safety + pitch * 3f64.sqrt() * 0.5);
            let z = (s.world.bounds.min.z + 1.0, s.world.bounds.max.z - 1.0);
            let goal_list = bench::sample_goals(&reach, pitch, &start, goals, z, 2.0 * cfg.topo.region_size, seed);
            let r = bench::bench_multigoal(&s.world.name, &mut mapped, &start, &goal_list, &methods, &cfg);
            ensure_parent(&out)?;
            export::write_json(&out, &r)?;
            let mut csv = String::from("method,goal,x,y,z,ms,length\n");
            for m in &r.methods {
                for (i, g) in m.goals.iter().enumerate() {
                    let len = g.length.map(|l| format!("{l:.4}")).unwrap_or_default();
                    csv += &format!("{:?},{i},{:.2},{:.2},{:.2},{:.4},{len}\n", m.method, g.goal.x, g.goal.y, g.goal.z, g.ms);
                }
            }
            fs::write(with_ext(&out, "csv"), csv)?;
            for m in &r.methods {
                println!("{:?}: {:.2} ms, {:.1} m, {} failed", m.method, m.total_ms, m.total_length, m.failures);
            }
        }
        BenchCmd::Memory { input, out, trajectory } => {
            let (s, cfg) = input.load()?;
            let traj = match trajectory {
                Some(p) => read_trajectory(&p)?,
                None => explore(s.clone(), cfg.clone(), mode)?.trajectory,
            };
            let r = bench::bench_memory(&s.world, &s.lidar, &traj, &cfg, mode)?;
            ensure_parent(&out)?;
            export::write_json(&out, &r)?;
            let mut csv = String::from("t,obs_map,dense_grid,preallocated_grid,pc_map\n");
            for m in &r.series {
                csv += &format!("{:.2},{},{},{},{}\n", m.t, m.obs_map, m.dense_grid, m.preallocated_grid, m.pc_map);
            }
            fs::write(with_ext(&out, "csv"), csv)?;
            println!(
                "peak bytes: obs-map {}, dense grid {}, preallocated {}, point cloud {}",
                r.peak(|m| m.obs_map),
                r.peak(|m| m.dense_grid),
                r.peak(|m| m.preallocated_grid),
                r.peak(|m| m.pc_map)
            );
        }
        BenchCmd::Cycles { input, out, report } => {
            let times: Vec<f64> = match report {
                Some(p) => {
                    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p)?)?;
                    let Some(arr) = v.get("cycle_times_ms").and_then(|a| a.as_array()) else {
                        bail!("{} has no cycle_times_ms array", p.display());
                    };
                    arr.iter().filter_map(|x| x.as_f64()).collect()
                }
                None => {
                    let (s, cfg) = input.load()?;
                    explore(s, cfg, mode)?.report().cycle_times_ms
                }
            };
            let st = bench::cycle_stats(&times);
            ensure_parent(&out)?;
            export::write_json(&out, &st)?;
            println!(
                "{} cycles: avg {:.2} ms, max {:.2} ms, max/avg {:.2}",
                st.count, st.avg_ms, st.max_ms, st.max_over_avg
            );
        }
    }
    Ok(())
}
