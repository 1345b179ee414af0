//! JSON helpers and the ground-truth sidecar the simulator writes next to
//! its exported runs. The sidecar captures everything an evaluation needs:
//! which scenario and seed produced the data, each run's hidden local
//! frame, and the true transform for every merge step.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{io_error, parse_error};
use crate::sim::scenario::{Scenario, ScenarioSim};
use crate::sim::world::ground_truth_transform;

/// Serialize any value as pretty-printed JSON. Struct fields keep their
/// declaration order, so output is stable across runs.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes to JSON");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Deserialize a JSON file, reporting malformed content with its byte
/// offset.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        let offset = offset_of(&text, e.line(), e.column());
        parse_error(path, offset, e.to_string())
    })
}

/// Byte offset of a 1-based (line, column) position.
fn offset_of(text: &str, line: usize, column: usize) -> u64 {
    let mut remaining = line.saturating_sub(1);
    let mut offset = 0usize;
    for (i, b) in text.bytes().enumerate() {
        if remaining == 0 {
            break;
        }
        if b == b'\n' {
            remaining -= 1;
            offset = i + 1;
        }
    }
    (offset + column.saturating_sub(1)).min(text.len()) as u64
}

/// Per-run ground truth: where the run really was.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub label: String,
    pub world_index: usize,
    /// Hex fingerprint of the generating world, stored as text because JSON
    /// numbers cannot carry a full u64.
    pub world_fingerprint: String,
    /// World-to-local frame, row-major 4x4.
    pub frame_offset: [f64; 16],
}

/// Ground-truth sidecar for one simulated scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSidecar {
    pub scenario: String,
    pub seed: u64,
    pub sphere_radius: f64,
    pub runs: Vec<RunMeta>,
    /// True transform for merge step i, which aligns run i+1 into the first
    /// run's frame; null where the runs share no world.
    pub merge_ground_truths: Vec<Option<[f64; 16]>>,
}

/// Assemble the sidecar for a simulated scenario.
pub fn scenario_sidecar(scenario: &Scenario, sim: &ScenarioSim, seed: u64) -> ScenarioSidecar {
    let runs = scenario
        .runs
        .iter()
        .zip(&sim.runs)
        .map(|(spec, run)| RunMeta {
            label: spec.label.to_string(),
            world_index: spec.world_index,
            world_fingerprint: format!("{:016x}", run.world_fingerprint),
            frame_offset: run.frame_offset.to_row_major(),
        })
        .collect();
    let merge_ground_truths = sim.runs[1..]
        .iter()
        .map(|later| {
            ground_truth_transform(&sim.runs[0], later)
                .ok()
                .map(|t| t.to_row_major())
        })
        .collect();
    ScenarioSidecar {
        scenario: scenario.name.to_string(),
        seed,
        sphere_radius: scenario.sphere_radius,
        runs,
        merge_ground_truths,
    }
}
