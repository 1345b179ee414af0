//! The merge subcommands: pairwise and recursive.

use std::path::PathBuf;

use clap::Args;
use frame_core::io::write_pcd_binary;
use frame_core::{
    merge_pair_with, merge_recursive, RegistrationParams, Result, RobotRun, TransformSE3,
};

use crate::common::{
    ensure_dir, load_run, non_negative_meters, positive_meters, sidecar_ground_truth,
    write_report, EffectiveConfig,
};

/// Flags shared by both merge commands.
#[derive(Args)]
pub struct MergeFlags {
    /// Submap sphere radius in meters
    #[arg(long, default_value_t = 10.0, value_parser = positive_meters)]
    pub radius: f64,
    /// Override the correspondence distance gate, meters
    #[arg(long, value_parser = positive_meters)]
    pub max_corr_dist: Option<f64>,
    /// Override the pre-registration voxel leaf, meters (0 disables)
    #[arg(long, value_parser = non_negative_meters)]
    pub voxel_leaf: Option<f64>,
    /// Output directory
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Ground-truth sidecar written by `frame simulate`
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Build the initial translation from the raw position difference
    /// instead of rotating the matched position first
    #[arg(long)]
    pub raw_eq9: bool,
}

impl MergeFlags {
    fn params(&self) -> RegistrationParams {
        let mut params = RegistrationParams::default();
        if let Some(d) = self.max_corr_dist {
            params.max_correspondence_distance = d;
        }
        if let Some(l) = self.voxel_leaf {
            params.voxel_leaf = l;
        }
        params
    }
}

#[derive(Args)]
pub struct MergeArgs {
    /// Own map (PCD)
    pub map_a: PathBuf,
    /// Own trajectory (CSV)
    pub traj_a: PathBuf,
    /// Own descriptor records (FRDS)
    pub desc_a: PathBuf,
    /// Incoming map (PCD)
    pub map_b: PathBuf,
    /// Incoming trajectory (CSV)
    pub traj_b: PathBuf,
    /// Incoming descriptor records (FRDS)
    pub desc_b: PathBuf,
    /// Which sidecar ground-truth entry applies to this pair
    #[arg(long, default_value_t = 0)]
    pub gt_index: usize,
    #[command(flatten)]
    pub flags: MergeFlags,
}

pub fn run_pair(args: MergeArgs) -> Result<()> {
    let own = load_run(&args.map_a, &args.traj_a, &args.desc_a)?;
    let incoming = load_run(&args.map_b, &args.traj_b, &args.desc_b)?;
    let params = args.flags.params();
    let ground_truth = match &args.flags.gt {
        Some(path) => {
            let gt = sidecar_ground_truth(path, args.gt_index)?;
            if gt.is_none() {
                eprintln!(
                    "note: sidecar records no ground truth for entry {}, skipping error metrics",
                    args.gt_index
                );
            }
            gt
        }
        None => None,
    };

    let (merged, report, initial) = merge_pair_with(
        &own,
        &incoming,
        args.flags.radius,
        &params,
        ground_truth.as_ref(),
        args.flags.raw_eq9,
    )?;

    let out = &args.flags.out;
    ensure_dir(out)?;
    write_pcd_binary(&merged, &out.join("merged.pcd"))?;
    let mut initial_cloud = own.map.clone();
    initial_cloud
        .points
        .extend(incoming.map.transformed(&initial).points);
    write_pcd_binary(&initial_cloud, &out.join("initial_alignment.pcd"))?;

    let config = EffectiveConfig::new(
        "merge",
        &[
            &args.map_a,
            &args.traj_a,
            &args.desc_a,
            &args.map_b,
            &args.traj_b,
            &args.desc_b,
        ],
        out,
        args.flags.radius,
        &params,
        args.flags.raw_eq9,
        args.flags.gt.as_ref(),
    );
    write_report(&report, &config, &out.join("report.json"))?;

    println!(
        "merged {} + {} points into {} in {:.3} s",
        report.points_m1,
        report.points_m2,
        out.join("merged.pcd").display(),
        report.timings.total
    );
    if let (Some(t_e), Some(r_e)) = (report.t_e, report.r_e) {
        println!("vs ground truth: T_e {t_e:.4} m, R_e {r_e:.4} deg");
    }
    Ok(())
}

#[derive(Args)]
pub struct MergeRecursiveArgs {
    /// MAP TRAJ DESC triples; the first triple anchors the shared frame
    #[arg(value_name = "FILE", num_args = 6.., required = true)]
    pub files: Vec<PathBuf>,
    #[command(flatten)]
    pub flags: MergeFlags,
}

pub fn run_recursive(args: MergeRecursiveArgs) -> Result<()> {
    if args.files.len() % 3 != 0 {
        eprintln!(
            "error: merge-recursive expects MAP TRAJ DESC triples, got {} paths",
            args.files.len()
        );
        std::process::exit(2);
    }
    let mut runs: Vec<RobotRun> = Vec::new();
    for triple in args.files.chunks(3) {
        runs.push(load_run(&triple[0], &triple[1], &triple[2])?);
    }
    let folds = runs.len() - 1;
    let params = args.flags.params();
    if args.flags.raw_eq9 {
        eprintln!("note: --raw-eq9 applies to pairwise merge only, ignoring");
    }

    // The library takes all-or-nothing ground truths; a sidecar with any
    // missing entry downgrades the whole run to unevaluated.
    let ground_truths: Option<Vec<TransformSE3>> = match &args.flags.gt {
        Some(path) => {
            let mut gts = Vec::with_capacity(folds);
            let mut complete = true;
            for i in 0..folds {
                match sidecar_ground_truth(path, i)? {
                    Some(t) => gts.push(t),
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            if complete {
                Some(gts)
            } else {
                eprintln!("note: sidecar ground truths incomplete, skipping error metrics");
                None
            }
        }
        None => None,
    };

    let out = &args.flags.out;
    ensure_dir(out)?;
    let config_inputs: Vec<&PathBuf> = args.files.iter().collect();
    let result = merge_recursive(
        runs,
        args.flags.radius,
        &params,
        ground_truths.as_deref(),
    );

    let (reports, merged, failure) = match result {
        Ok((cloud, reports)) => (reports, Some(cloud), None),
        Err(e) => (e.completed, None, Some((e.failed_at, e.error))),
    };
    for (i, report) in reports.iter().enumerate() {
        let config = EffectiveConfig::new(
            "merge-recursive",
            &config_inputs,
            out,
            args.flags.radius,
            &params,
            false,
            args.flags.gt.as_ref(),
        );
        write_report(report, &config, &out.join(format!("report_{i}.json")))?;
        match (report.t_e, report.r_e) {
            (Some(t_e), Some(r_e)) => println!(
                "fold {i}: T_e {t_e:.4} m, R_e {r_e:.4} deg, {:.3} s",
                report.timings.total
            ),
            _ => println!("fold {i}: {:.3} s", report.timings.total),
        }
    }
    if let Some((failed_at, error)) = failure {
        eprintln!("error: merge fold {failed_at} failed");
        return Err(error);
    }
    let merged = merged.expect("success carries the merged cloud");
    write_pcd_binary(&merged, &out.join("merged.pcd"))?;
    println!(
        "merged {folds} folds into {} ({} points)",
        out.join("merged.pcd").display(),
        merged.len()
    );
    Ok(())
}
