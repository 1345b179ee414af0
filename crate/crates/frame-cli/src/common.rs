//! Helpers shared by the subcommands: input loading, flag parsing, and the
//! effective-config block embedded in every report.

use std::path::{Path, PathBuf};

use frame_core::io::{read_frds, read_json, read_pcd, read_trajectory_csv, ScenarioSidecar};
use frame_core::{FrameError, MergeReport, RegistrationParams, Result, RobotRun, TransformSE3};
use serde::Serialize;

/// Clap value parser for strictly positive meters.
pub fn positive_meters(raw: &str) -> std::result::Result<f64, String> {
    let v: f64 = raw.parse().map_err(|_| format!("{raw:?} is not a number"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err("must be a positive finite number".to_string())
    }
}

/// Clap value parser for non-negative meters (0 disables a feature).
pub fn non_negative_meters(raw: &str) -> std::result::Result<f64, String> {
    let v: f64 = raw.parse().map_err(|_| format!("{raw:?} is not a number"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err("must be a non-negative finite number".to_string())
    }
}

/// A validation failure attributed to an input file as a whole.
pub fn file_error(path: &Path, message: String) -> FrameError {
    FrameError::Parse {
        path: path.to_path_buf(),
        offset: 0,
        message,
    }
}

/// Load one robot's artifacts (PCD map, CSV trajectory, FRDS records).
pub fn load_run(map: &Path, traj: &Path, desc: &Path) -> Result<RobotRun> {
    Ok(RobotRun {
        map: read_pcd(map)?,
        trajectory: read_trajectory_csv(traj)?,
        records: read_frds(desc)?,
    })
}

/// Pull one merge ground truth out of a simulator sidecar. `Ok(None)` means
/// the sidecar explicitly records that no alignment exists for this pair.
pub fn sidecar_ground_truth(path: &Path, index: usize) -> Result<Option<TransformSE3>> {
    let sidecar: ScenarioSidecar = read_json(path)?;
    let entry = sidecar.merge_ground_truths.get(index).ok_or_else(|| {
        file_error(
            path,
            format!(
                "sidecar holds {} merge ground-truth entries, index {} is out of range",
                sidecar.merge_ground_truths.len(),
                index
            ),
        )
    })?;
    match entry {
        Some(m) => {
            let t = TransformSE3::from_row_major(m)
                .map_err(|e| file_error(path, format!("ground-truth entry {index}: {e}")))?;
            Ok(Some(t))
        }
        None => Ok(None),
    }
}

/// The configuration a merge actually ran with, embedded in its report so
/// the run can be reproduced from the report alone.
#[derive(Serialize)]
pub struct EffectiveConfig {
    pub command: String,
    pub inputs: Vec<String>,
    pub output_dir: String,
    pub radius: f64,
    pub max_correspondence_distance: f64,
    pub voxel_leaf: f64,
    pub raw_eq9: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    pub threads: usize,
}

impl EffectiveConfig {
    pub fn new(
        command: &str,
        inputs: &[&PathBuf],
        out: &Path,
        radius: f64,
        params: &RegistrationParams,
        raw_eq9: bool,
        gt: Option<&PathBuf>,
    ) -> Self {
        EffectiveConfig {
            command: command.to_string(),
            inputs: inputs
                .iter()
                .map(|p| p.to_string_lossy().into_owned())
                .collect(),
            output_dir: out.to_string_lossy().into_owned(),
            radius,
            max_correspondence_distance: params.max_correspondence_distance,
            voxel_leaf: params.voxel_leaf,
            raw_eq9,
            ground_truth: gt.map(|p| p.to_string_lossy().into_owned()),
            threads: rayon::current_num_threads(),
        }
    }
}

/// Serialize a report with the effective config attached under "config".
/// Going through `serde_json::Value` sorts the keys, keeping the output
/// stable across runs.
pub fn write_report(report: &MergeReport, config: &EffectiveConfig, path: &Path) -> Result<()> {
    let mut value = serde_json::to_value(report).expect("report serializes");
    let obj = value.as_object_mut().expect("report is a JSON object");
    obj.insert(
        "config".to_string(),
        serde_json::to_value(config).expect("config serializes"),
    );
    frame_core::io::write_json(&value, path)
}

/// Create the output directory if needed.
pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| FrameError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
