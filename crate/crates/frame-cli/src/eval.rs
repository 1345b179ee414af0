//! The eval subcommand: recompute error metrics for merge reports against a
//! simulator ground-truth sidecar and emit a table plus CSV.

use std::path::PathBuf;

use clap::Args;
use frame_core::io::{read_json, ScenarioSidecar};
use frame_core::{transform_error, FrameError, MergeReport, Result, TransformSE3};

use crate::common::{ensure_dir, file_error};

#[derive(Args)]
pub struct EvalArgs {
    /// Ground-truth sidecar written by `frame simulate`
    #[arg(long)]
    pub gt: PathBuf,
    /// Output directory for eval.csv
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Merge reports, in the fold order the sidecar records
    #[arg(value_name = "REPORT", required = true)]
    pub reports: Vec<PathBuf>,
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    match v {
        Some(v) => format!("{v:.decimals$}"),
        None => "-".to_string(),
    }
}

fn csv_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v}"),
        None => String::new(),
    }
}

pub fn run(args: EvalArgs) -> Result<()> {
    let sidecar: ScenarioSidecar = read_json(&args.gt)?;
    ensure_dir(&args.out)?;

    let mut csv = String::from("merge,overlap_percent,t_e_m,r_e_deg,time_s\n");
    println!("OVERLAP (%) & T_e (m) & R_e (deg) & TIME (s)");
    for (i, path) in args.reports.iter().enumerate() {
        let value: serde_json::Value = read_json(path)?;
        let report: MergeReport = serde_json::from_value(value).map_err(|e| FrameError::Parse {
            path: path.clone(),
            offset: 0,
            message: format!("not a merge report: {e}"),
        })?;
        let entry = sidecar.merge_ground_truths.get(i).ok_or_else(|| {
            file_error(
                &args.gt,
                format!(
                    "sidecar holds {} merge ground-truth entries, report {} has none",
                    sidecar.merge_ground_truths.len(),
                    i
                ),
            )
        })?;
        let (t_e, r_e) = match entry {
            Some(m) => {
                let gt = TransformSE3::from_row_major(m)
                    .map_err(|e| file_error(&args.gt, format!("ground-truth entry {i}: {e}")))?;
                let err = transform_error(&gt, &report.transform)?;
                (Some(err.translation_error), Some(err.rotation_error))
            }
            None => (None, None),
        };
        let time = report.timings.total;
        println!(
            "{} & {} & {} & {time:.3}",
            fmt_opt(report.overlap_percent, 1),
            fmt_opt(t_e, 4),
            fmt_opt(r_e, 4)
        );
        csv.push_str(&format!(
            "{i},{},{},{},{time}\n",
            csv_opt(report.overlap_percent),
            csv_opt(t_e),
            csv_opt(r_e)
        ));
    }
    let csv_path = args.out.join("eval.csv");
    std::fs::write(&csv_path, csv).map_err(|e| FrameError::Io {
        path: csv_path.clone(),
        source: e,
    })?;
    println!("wrote {}", csv_path.display());
    Ok(())
}
