//! Bundled simulation scenarios: ready-made worlds, robot runs, and merge
//! settings exercising the pipeline end to end. Each scenario is fully
//! determined by its name and a seed.

use nalgebra::Vector3;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::Result;
use crate::geometry::{Point3, TransformSE3};
use crate::sim::world::{
    generate_world, mix, simulate_run, CorridorEdge, ScanConfig, SimRun, World, WorldSpec,
};

/// Azimuth step giving 256 firings per revolution, one per image column,
/// fired half a step past each bin edge. The step is exactly representable
/// in binary floating point, so rotating such a scan by whole steps moves
/// returns between columns without ever landing on a bin boundary.
pub const COLUMN_ALIGNED_STEP_DEG: f64 = 360.0 / 256.0;

/// One robot excursion inside a scenario.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub label: String,
    /// Which of the scenario's worlds the run drives through.
    pub world_index: usize,
    pub waypoints: Vec<Point3>,
    pub config: ScanConfig,
    /// World-to-local map frame of this robot.
    pub local_frame: TransformSE3,
}

/// A named, seed-parameterized simulation setup. Runs are listed in the
/// order they should be merged.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub worlds: Vec<WorldSpec>,
    pub runs: Vec<ScenarioRun>,
    /// Submap radius suited to the scenario's geometry, meters.
    pub sphere_radius: f64,
}

/// Simulated outputs of a scenario: generated worlds plus one run each.
#[derive(Debug)]
pub struct ScenarioSim {
    pub worlds: Vec<World>,
    pub runs: Vec<SimRun>,
}

pub fn scenario_names() -> [&'static str; 3] {
    ["tunnel-pair", "branch-quad", "disjoint"]
}

/// Look a bundled scenario up by name, instantiated for `seed`.
pub fn scenario_by_name(name: &str, seed: u64) -> Option<Scenario> {
    match name {
        "tunnel-pair" => Some(tunnel_pair(seed)),
        "branch-quad" => Some(branch_quad(seed)),
        "disjoint" => Some(disjoint(seed)),
        _ => None,
    }
}

/// Generate every world and simulate every run of a scenario.
pub fn simulate_scenario(scenario: &Scenario) -> Result<ScenarioSim> {
    let worlds: Vec<World> = scenario
        .worlds
        .iter()
        .map(generate_world)
        .collect::<Result<_>>()?;
    let runs: Vec<SimRun> = scenario
        .runs
        .iter()
        .map(|r| {
            simulate_run(
                &worlds[r.world_index],
                &r.waypoints,
                &r.config,
                &r.local_frame,
            )
        })
        .collect::<Result<_>>()?;
    Ok(ScenarioSim { worlds, runs })
}

fn world_seed(seed: u64, index: usize) -> u64 {
    mix(seed, 1 + index as u64)
}

fn run_config(seed: u64, run_index: usize, vfov_deg: f64) -> ScanConfig {
    ScanConfig {
        channels: 16,
        vertical_fov_deg: vfov_deg,
        azimuth_step_deg: COLUMN_ALIGNED_STEP_DEG,
        max_range: 50.0,
        noise_sigma: 0.02,
        seed: mix(seed, 100 + run_index as u64),
    }
}

fn p(x: f64, y: f64, z: f64) -> Point3 {
    Point3::new(x, y, z)
}

fn edge(a: usize, b: usize, width: f64, height: f64) -> CorridorEdge {
    CorridorEdge {
        a,
        b,
        width,
        height,
    }
}

/// A tapering main tunnel with three side branches, mapped by two robots
/// driving it in opposite directions with different sensors and unrelated
/// local frames. The canonical two-map merge demo.
fn tunnel_pair(seed: u64) -> Scenario {
    let world = WorldSpec {
        nodes: vec![
            p(0.0, 0.0, 0.0),
            p(40.0, 0.0, 0.0),
            p(80.0, 0.0, 0.0),
            p(120.0, 0.0, 0.0),
            p(160.0, 0.0, 0.0),
            p(200.0, 0.0, 0.0),
            p(260.0, 0.0, 0.0),
            p(80.0, 30.0, 0.0),
            p(160.0, -25.0, 0.0),
            p(200.0, 20.0, 0.0),
        ],
        edges: vec![
            edge(0, 1, 9.5, 5.0),
            edge(1, 2, 8.0, 4.0),
            edge(2, 3, 6.5, 4.5),
            edge(3, 4, 5.5, 3.5),
            edge(4, 5, 4.5, 4.25),
            edge(5, 6, 3.75, 3.25),
            edge(2, 7, 6.0, 4.0),
            edge(4, 8, 4.5, 3.5),
            edge(5, 9, 3.25, 3.25),
        ],
        roughness_amplitude: 0.05,
        seed: world_seed(seed, 0),
    };
    Scenario {
        name: "tunnel-pair".to_string(),
        worlds: vec![world],
        runs: vec![
            ScenarioRun {
                label: "west-bot".to_string(),
                world_index: 0,
                waypoints: vec![p(5.0, 0.0, 1.0), p(150.0, 0.0, 1.0)],
                config: run_config(seed, 0, 20.0),
                local_frame: TransformSE3::identity(),
            },
            ScenarioRun {
                label: "east-bot".to_string(),
                world_index: 0,
                waypoints: vec![p(255.0, 0.0, 1.0), p(10.0, 0.0, 1.0)],
                config: run_config(seed, 1, 30.0),
                local_frame: TransformSE3::from_yaw_translation(
                    PI,
                    Vector3::new(12.0, -7.0, 0.0),
                ),
            },
        ],
        sphere_radius: 10.0,
    }
}

/// Two parallel tunnels joined by two cross passages, covered by four
/// robots whose maps chain together one merge at a time. Every junction
/// carries a distinct width signature (a wide vs narrow cross link, stub
/// branches of different widths on different sides) and no two corridors
/// share the same cross-section, so that no two neighborhoods of the map
/// look alike to the place descriptor. All four robots carry the same
/// sensor aperture: with matching beam geometry a revisited place scores
/// near zero descriptor distance (the shared wall texture lines up ring
/// by ring), which keeps every fold of the recursive merge anchored to a
/// genuine revisit rather than a lookalike corridor.
fn branch_quad(seed: u64) -> Scenario {
    let world = WorldSpec {
        nodes: vec![
            p(0.0, 0.0, 0.0),      // 0
            p(50.0, 0.0, 0.0),     // 1
            p(150.0, 0.0, 0.0),    // 2
            p(200.0, 0.0, 0.0),    // 3
            p(0.0, 60.0, 0.0),     // 4
            p(50.0, 60.0, 0.0),    // 5
            p(150.0, 60.0, 0.0),   // 6
            p(200.0, 60.0, 0.0),   // 7
            p(100.0, 60.0, 0.0),   // 8: north mid junction
            p(100.0, 85.0, 0.0),   // 9: north stub end
            p(100.0, 0.0, 0.0),    // 10: south mid junction
            p(100.0, -25.0, 0.0),  // 11: south stub end
        ],
        edges: vec![
            edge(0, 1, 9.0, 5.0),
            edge(1, 10, 7.0, 4.5),
            edge(10, 2, 6.0, 4.5),
            edge(2, 3, 5.0, 4.0),
            edge(4, 5, 6.5, 3.5),
            edge(5, 8, 5.5, 4.5),
            edge(8, 6, 4.5, 4.0),
            edge(6, 7, 4.0, 3.5),
            edge(1, 5, 8.0, 4.0),
            edge(2, 6, 4.25, 3.25),
            edge(8, 9, 3.5, 3.5),
            edge(10, 11, 6.0, 4.0),
        ],
        roughness_amplitude: 0.05,
        seed: world_seed(seed, 0),
    };
    Scenario {
        name: "branch-quad".to_string(),
        worlds: vec![world],
        runs: vec![
            ScenarioRun {
                label: "south-line".to_string(),
                world_index: 0,
                waypoints: vec![p(5.0, 0.0, 1.0), p(195.0, 0.0, 1.0)],
                config: run_config(seed, 0, 30.0),
                local_frame: TransformSE3::identity(),
            },
            ScenarioRun {
                label: "west-cross".to_string(),
                world_index: 0,
                waypoints: vec![
                    p(30.0, 0.0, 1.0),
                    p(50.0, 0.0, 1.0),
                    p(50.0, 60.0, 1.0),
                    p(110.0, 60.0, 1.0),
                ],
                config: run_config(seed, 1, 30.0),
                local_frame: TransformSE3::from_yaw_translation(
                    FRAC_PI_2,
                    Vector3::new(-5.0, 8.0, 0.0),
                ),
            },
            ScenarioRun {
                label: "north-line".to_string(),
                world_index: 0,
                waypoints: vec![p(195.0, 60.0, 1.0), p(5.0, 60.0, 1.0)],
                config: run_config(seed, 2, 30.0),
                local_frame: TransformSE3::from_yaw_translation(
                    PI,
                    Vector3::new(12.0, -7.0, 0.0),
                ),
            },
            ScenarioRun {
                label: "east-cross".to_string(),
                world_index: 0,
                waypoints: vec![
                    p(130.0, 60.0, 1.0),
                    p(150.0, 60.0, 1.0),
                    p(150.0, 0.0, 1.0),
                    p(170.0, 0.0, 1.0),
                ],
                config: run_config(seed, 3, 30.0),
                local_frame: TransformSE3::from_yaw_translation(
                    -FRAC_PI_2,
                    Vector3::new(3.0, 4.0, 0.0),
                ),
            },
        ],
        sphere_radius: 15.0,
    }
}

/// Two unrelated worlds whose runs share no structure: one robot skims a
/// corridor floor, the other hugs the ceiling of a different world. Merging
/// these maps must fail with a staged error, never silently succeed.
fn disjoint(seed: u64) -> Scenario {
    let tube = |world_seed: u64| WorldSpec {
        nodes: vec![p(0.0, 0.0, 0.0), p(60.0, 0.0, 0.0)],
        edges: vec![edge(0, 1, 8.0, 8.0)],
        roughness_amplitude: 0.01,
        seed: world_seed,
    };
    Scenario {
        name: "disjoint".to_string(),
        worlds: vec![tube(world_seed(seed, 0)), tube(world_seed(seed, 1))],
        runs: vec![
            ScenarioRun {
                label: "floor-bot".to_string(),
                world_index: 0,
                waypoints: vec![p(5.0, 0.0, 1.0), p(55.0, 0.0, 1.0)],
                config: run_config(seed, 0, 30.0),
                local_frame: TransformSE3::identity(),
            },
            ScenarioRun {
                label: "ceiling-bot".to_string(),
                world_index: 1,
                waypoints: vec![p(5.0, 0.0, 7.0), p(55.0, 0.0, 7.0)],
                config: run_config(seed, 1, 30.0),
                local_frame: TransformSE3::identity(),
            },
        ],
        sphere_radius: 3.0,
    }
}
