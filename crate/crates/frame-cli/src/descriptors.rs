//! The descriptors subcommand: turn per-step sensor-frame scans plus a
//! trajectory into a descriptor record file.

use std::path::PathBuf;

use clap::Args;
use frame_core::descriptor::{EXPECTED_WIDTH, RECORD_VFOV_DEG, RINGS};
use frame_core::io::{read_pcd, read_trajectory_csv, write_frds, write_pgm};
use frame_core::{
    extract_descriptors, spherical_project, DescriptorRecord, ProjectionConfig, Result,
};

use crate::common::{ensure_dir, positive_meters};

#[derive(Args)]
pub struct DescriptorsArgs {
    /// Trajectory CSV; each timestep k expects a scan named scan_<k:06>.pcd
    #[arg(long)]
    pub traj: PathBuf,
    /// Directory holding the per-step sensor-frame scans
    #[arg(long)]
    pub scans: PathBuf,
    /// Output descriptor file (FRDS)
    #[arg(long)]
    pub out: PathBuf,
    /// Vertical field of view to project onto; leave at the default so
    /// records stay comparable across sensors
    #[arg(long, default_value_t = RECORD_VFOV_DEG, value_parser = positive_meters)]
    pub vfov: f64,
    /// Maximum range treated as a return, meters
    #[arg(long, default_value_t = 50.0, value_parser = positive_meters)]
    pub max_range: f64,
    /// Directory to also write per-step depth images (PGM) into
    #[arg(long)]
    pub dump_images: Option<PathBuf>,
}

pub fn run(args: DescriptorsArgs) -> Result<()> {
    let trajectory = read_trajectory_csv(&args.traj)?;
    let config = ProjectionConfig {
        height: RINGS,
        width: EXPECTED_WIDTH,
        vfov_deg: args.vfov,
        max_range: args.max_range,
    };
    if let Some(dir) = &args.dump_images {
        ensure_dir(dir)?;
    }
    let mut records = Vec::with_capacity(trajectory.len());
    for pose in trajectory.poses() {
        let scan_path = args.scans.join(format!("scan_{:06}.pcd", pose.timestep));
        let scan = read_pcd(&scan_path)?;
        let image = spherical_project(&scan, &config)?;
        if let Some(dir) = &args.dump_images {
            write_pgm(&image, &dir.join(format!("depth_{:06}.pgm", pose.timestep)))?;
        }
        let (query, orient) = extract_descriptors(&image)?;
        records.push(DescriptorRecord {
            query,
            orient,
            position: pose.position,
            timestep: pose.timestep,
        });
    }
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    write_frds(&records, &args.out)?;
    println!("wrote {} records to {}", records.len(), args.out.display());
    Ok(())
}
