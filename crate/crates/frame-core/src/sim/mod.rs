//! Ground-truthed LiDAR simulation: triangle-mesh tunnel worlds, a BVH ray
//! caster, a spinning range sensor, and bundled end-to-end scenarios.

pub mod mesh;
pub mod scenario;
pub mod world;

pub use mesh::{Bvh, TriMesh, Triangle};
pub use scenario::{
    scenario_by_name, scenario_names, simulate_scenario, Scenario, ScenarioRun, ScenarioSim,
    COLUMN_ALIGNED_STEP_DEG,
};
pub use world::{
    generate_world, ground_truth_transform, mix, simulate_run, CorridorEdge, ScanConfig, SimRun,
    World, WorldSpec,
};
