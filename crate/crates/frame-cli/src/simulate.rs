//! The simulate subcommand: bundled scenarios or user-supplied world and
//! run specs, exported as the standard artifact set.

use std::path::{Path, PathBuf};

use clap::Args;
use frame_core::descriptor::RINGS;
use frame_core::io::{
    read_json, scenario_sidecar, write_frds, write_json, write_pcd_binary, write_stl,
    write_trajectory_csv,
};
use frame_core::sim::{
    generate_world, scenario_by_name, scenario_names, simulate_run, Scenario, ScenarioRun,
    ScenarioSim, ScanConfig, SimRun, WorldSpec,
};
use frame_core::{Point3, Result, TransformSE3};
use nalgebra::Vector3;
use serde::Deserialize;

use crate::common::{ensure_dir, file_error, positive_meters};

#[derive(Args)]
pub struct SimulateArgs {
    /// Bundled scenario name (tunnel-pair, branch-quad, disjoint)
    #[arg(long, conflicts_with_all = ["world", "runs"])]
    pub scenario: Option<String>,
    /// World spec JSON for a custom scenario
    #[arg(long, requires = "runs", required_unless_present = "scenario")]
    pub world: Option<PathBuf>,
    /// Run spec JSON, repeat once per robot (custom scenario)
    #[arg(long, requires = "world")]
    pub runs: Vec<PathBuf>,
    /// Seed the scenario's worlds and sensor noise derive from
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Submap radius recorded in the sidecar for later merges, meters
    #[arg(long, default_value_t = 10.0, value_parser = positive_meters)]
    pub radius: f64,
    /// Also export every per-step sensor-frame scan under <label>_scans/
    #[arg(long)]
    pub dump_scans: bool,
}

/// One robot's entry in a custom scenario: where it drives, how it scans,
/// and where its local map frame sits in the world.
#[derive(Deserialize)]
struct RunSpecFile {
    label: String,
    #[serde(default)]
    world_index: usize,
    waypoints: Vec<Point3>,
    #[serde(default)]
    config: ScanConfig,
    #[serde(default)]
    frame: FramePose,
}

/// Human-writable world-to-local frame: yaw plus translation.
#[derive(Deserialize, Default)]
struct FramePose {
    #[serde(default)]
    yaw: f64,
    #[serde(default)]
    translation: [f64; 3],
}

impl RunSpecFile {
    fn validate(&self, path: &Path, n_worlds: usize) -> Result<()> {
        if self.label.is_empty() || !self.label.chars().all(|c| c.is_alphanumeric() || c == '-') {
            return Err(file_error(
                path,
                format!(
                    "label {:?} must be non-empty alphanumeric-or-dash (it names output files)",
                    self.label
                ),
            ));
        }
        if self.world_index >= n_worlds {
            return Err(file_error(
                path,
                format!(
                    "world_index {} out of range for {} world(s)",
                    self.world_index, n_worlds
                ),
            ));
        }
        if self.waypoints.len() < 2 {
            return Err(file_error(path, "need at least two waypoints".to_string()));
        }
        let length: f64 = self
            .waypoints
            .windows(2)
            .map(|w| w[0].distance(&w[1]))
            .sum();
        if !(length > 1.0) || !length.is_finite() {
            return Err(file_error(
                path,
                format!("waypoint path must be finite and longer than 1 m, got {length} m"),
            ));
        }
        if self.config.channels != RINGS {
            return Err(file_error(
                path,
                format!(
                    "config.channels is {}, the descriptor stack expects {}",
                    self.config.channels, RINGS
                ),
            ));
        }
        let c = &self.config;
        if !(c.vertical_fov_deg > 0.0 && c.vertical_fov_deg <= 180.0)
            || !(c.azimuth_step_deg > 0.0 && c.azimuth_step_deg <= 90.0)
            || !(c.max_range > 0.0)
            || !(c.noise_sigma >= 0.0)
        {
            return Err(file_error(
                path,
                "config needs vertical_fov_deg in (0, 180], azimuth_step_deg in (0, 90], \
                 max_range > 0, noise_sigma >= 0"
                    .to_string(),
            ));
        }
        Ok(())
    }

    fn into_scenario_run(self) -> ScenarioRun {
        let t = Vector3::new(
            self.frame.translation[0],
            self.frame.translation[1],
            self.frame.translation[2],
        );
        ScenarioRun {
            label: self.label,
            world_index: self.world_index,
            waypoints: self.waypoints,
            config: self.config,
            local_frame: TransformSE3::from_yaw_translation(self.frame.yaw, t),
        }
    }
}

pub fn run(args: SimulateArgs) -> Result<()> {
    let scenario = match (&args.scenario, &args.world) {
        (Some(name), _) => match scenario_by_name(name, args.seed) {
            Some(s) => s,
            None => {
                eprintln!(
                    "error: unknown scenario {:?}; bundled scenarios: {}",
                    name,
                    scenario_names().join(", ")
                );
                std::process::exit(1);
            }
        },
        (None, Some(world_path)) => load_custom(world_path, &args)?,
        (None, None) => unreachable!("clap requires --scenario or --world"),
    };

    // Simulate piecewise rather than through the scenario helper so a
    // failure is attributed to the spec file that caused it.
    let mut worlds = Vec::with_capacity(scenario.worlds.len());
    for (i, spec) in scenario.worlds.iter().enumerate() {
        let world = generate_world(spec).map_err(|e| match &args.world {
            Some(p) => file_error(p, e.to_string()),
            None => file_error(
                Path::new(&format!("<bundled world {i}>")),
                e.to_string(),
            ),
        })?;
        worlds.push(world);
    }
    let mut sims: Vec<SimRun> = Vec::with_capacity(scenario.runs.len());
    for (i, run) in scenario.runs.iter().enumerate() {
        let sim = simulate_run(
            &worlds[run.world_index],
            &run.waypoints,
            &run.config,
            &run.local_frame,
        )
        .map_err(|e| match args.runs.get(i) {
            Some(p) => file_error(p, e.to_string()),
            None => file_error(Path::new(&format!("<run {}>", run.label)), e.to_string()),
        })?;
        sims.push(sim);
    }
    let sim = ScenarioSim {
        worlds,
        runs: sims,
    };

    export(&scenario, &sim, &args)
}

fn load_custom(world_path: &Path, args: &SimulateArgs) -> Result<Scenario> {
    let spec: WorldSpec = read_json(world_path)?;
    if args.runs.is_empty() {
        return Err(file_error(
            world_path,
            "custom scenarios need at least one --runs file".to_string(),
        ));
    }
    let mut runs = Vec::with_capacity(args.runs.len());
    let mut labels: Vec<String> = Vec::new();
    for path in &args.runs {
        let rs: RunSpecFile = read_json(path)?;
        rs.validate(path, 1)?;
        if labels.contains(&rs.label) {
            return Err(file_error(
                path,
                format!("duplicate run label {:?}", rs.label),
            ));
        }
        labels.push(rs.label.clone());
        runs.push(rs.into_scenario_run());
    }
    Ok(Scenario {
        name: "custom".to_string(),
        worlds: vec![spec],
        runs,
        sphere_radius: args.radius,
    })
}

fn export(scenario: &Scenario, sim: &ScenarioSim, args: &SimulateArgs) -> Result<()> {
    let out = &args.out;
    ensure_dir(out)?;
    for (i, world) in sim.worlds.iter().enumerate() {
        write_stl(world.mesh(), &out.join(format!("world_{i}.stl")))?;
    }
    for (spec, run) in scenario.runs.iter().zip(&sim.runs) {
        let label = &spec.label;
        write_pcd_binary(&run.run.map, &out.join(format!("{label}_map.pcd")))?;
        write_trajectory_csv(&run.run.trajectory, &out.join(format!("{label}_traj.csv")))?;
        write_frds(&run.run.records, &out.join(format!("{label}_desc.frds")))?;
        if args.dump_scans {
            let dir = out.join(format!("{label}_scans"));
            ensure_dir(&dir)?;
            for (pose, scan) in run.run.trajectory.poses().iter().zip(&run.scans) {
                write_pcd_binary(scan, &dir.join(format!("scan_{:06}.pcd", pose.timestep)))?;
            }
        }
        println!(
            "{label}: {} poses, {} map points",
            run.run.trajectory.len(),
            run.run.map.len()
        );
    }
    let sidecar = scenario_sidecar(scenario, sim, args.seed);
    write_json(&sidecar, &out.join("sidecar.json"))?;
    println!(
        "scenario {} -> {} ({} world(s), {} run(s), sidecar.json)",
        scenario.name,
        out.display(),
        sim.worlds.len(),
        sim.runs.len()
    );
    Ok(())
}
