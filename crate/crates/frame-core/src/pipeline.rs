//! The merge pipeline: place-descriptor query, yaw regression, initial
//! alignment, sphere-constrained fine registration, and the final map union,
//! plus recursive folding of more than two runs and metric reporting.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::descriptor::{estimate_yaw, DescriptorRecord};
use crate::error::{FrameError, Result};
use crate::geometry::{
    transform_error, wrap_angle, PointCloud, Trajectory, TrajectoryPose, TransformSE3,
};
use crate::overlap::{
    build_index, initial_transform, initial_transform_raw, query_best_pair, OverlapMatch,
};
use crate::registration::{
    gicp_register, prepare_cloud, sample_sphere, RegistrationParams, SphereRegion,
};
use crate::voxel::voxel_key;

/// Everything one robot brings to a merge: its accumulated map, the
/// trajectory the map was built along, and the descriptor records taken at
/// each trajectory step.
#[derive(Debug, Clone)]
pub struct RobotRun {
    pub map: PointCloud,
    pub trajectory: Trajectory,
    pub records: Vec<DescriptorRecord>,
}

impl RobotRun {
    /// Check the cross-references a merge relies on: records exist and every
    /// record's timestep is present in the trajectory.
    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(FrameError::EmptyRecordSet);
        }
        for r in &self.records {
            if self.trajectory.lookup(r.timestep).is_none() {
                return Err(FrameError::OrphanRecord {
                    timestep: r.timestep,
                });
            }
        }
        Ok(())
    }
}

/// Wall-clock seconds per pipeline stage. `total` covers the whole transform
/// computation (validation through registration); building the merged cloud
/// and evaluating ground-truth metrics are excluded.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StageTimings {
    pub query: f64,
    pub yaw: f64,
    pub sphere: f64,
    pub registration: f64,
    pub total: f64,
}

mod transform_row_major {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::geometry::TransformSE3;

    pub fn serialize<S: Serializer>(t: &TransformSE3, s: S) -> Result<S::Ok, S::Error> {
        let m = t.to_row_major();
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<TransformSE3, D::Error> {
        let v: Vec<f64> = Vec::deserialize(d)?;
        let arr: [f64; 16] = v
            .try_into()
            .map_err(|_| D::Error::custom("transform must have 16 entries"))?;
        TransformSE3::from_row_major(&arr).map_err(D::Error::custom)
    }
}

/// The outcome record of one pairwise merge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergeReport {
    /// Maps the incoming map into the own map's frame (16-element row-major
    /// homogeneous matrix in JSON).
    #[serde(with = "transform_row_major")]
    pub transform: TransformSE3,
    pub points_m1: usize,
    pub points_m2: usize,
    /// Own and incoming trajectory lengths, meters.
    pub trajectory_lengths: [f64; 2],
    /// Voxel-intersection overlap between the inputs under the supplied
    /// ground truth; only computable with ground truth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap_percent: Option<f64>,
    /// Translation error vs ground truth, meters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_e: Option<f64>,
    /// Rotation error vs ground truth, degrees.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_e: Option<f64>,
    pub timings: StageTimings,
    pub sphere_radius: f64,
    #[serde(rename = "match")]
    pub matched: OverlapMatch,
}

/// Voxel edge used for the reported overlap percentage.
const OVERLAP_VOXEL: f64 = 0.5;

/// Merge `incoming`'s map into `own`'s frame. Returns the merged cloud
/// (own's points unchanged, incoming's transformed, concatenated in that
/// order) and the report.
pub fn merge_pair(
    own: &RobotRun,
    incoming: &RobotRun,
    radius: f64,
    params: &RegistrationParams,
    ground_truth: Option<&TransformSE3>,
) -> Result<(PointCloud, MergeReport)> {
    let (merged, report, _initial) =
        merge_pair_with(own, incoming, radius, params, ground_truth, false)?;
    Ok((merged, report))
}

/// `merge_pair` with the initial-translation convention made explicit and
/// the pre-refinement guess returned alongside the result (callers that
/// export an initial-alignment artifact need it). `raw_initial_translation`
/// uses the plain position difference instead of rotating the matched
/// position first; it exists for comparison runs.
pub fn merge_pair_with(
    own: &RobotRun,
    incoming: &RobotRun,
    radius: f64,
    params: &RegistrationParams,
    ground_truth: Option<&TransformSE3>,
    raw_initial_translation: bool,
) -> Result<(PointCloud, MergeReport, TransformSE3)> {
    assert!(radius > 0.0, "sphere radius must be positive");
    let t_start = Instant::now();
    own.validate().map_err(|e| e.in_stage("input-validation"))?;
    incoming
        .validate()
        .map_err(|e| e.in_stage("input-validation"))?;

    // Place query: own records are indexed, incoming records probe them.
    let t_query = Instant::now();
    let index = build_index(&own.records).map_err(|e| e.in_stage("overlap-query"))?;
    let matched =
        query_best_pair(&index, &incoming.records).map_err(|e| e.in_stage("overlap-query"))?;
    let query_s = t_query.elapsed().as_secs_f64();

    // Heading-compensated yaw discrepancy. The orientation descriptors see
    // scans in the sensor frame, so the correlation yields the difference of
    // the two sensors' physical headings; adding the own-frame heading and
    // subtracting the incoming-frame heading converts that into the rotation
    // between the two map frames.
    let t_yaw = Instant::now();
    let own_rec = record_for(&own.records, matched.own_timestep);
    let inc_rec = record_for(&incoming.records, matched.incoming_timestep);
    let own_heading = own
        .trajectory
        .lookup(matched.own_timestep)
        .expect("validated")
        .yaw;
    let inc_heading = incoming
        .trajectory
        .lookup(matched.incoming_timestep)
        .expect("validated")
        .yaw;
    let correlation = estimate_yaw(&inc_rec.orient, &own_rec.orient)
        .map_err(|e| e.in_stage("yaw-regression"))?;
    let delta_yaw = wrap_angle(correlation + own_heading - inc_heading);
    let initial = if raw_initial_translation {
        initial_transform_raw(&matched, delta_yaw)
    } else {
        initial_transform(&matched, delta_yaw)
    };
    let yaw_s = t_yaw.elapsed().as_secs_f64();

    // Overlap spheres around the matched positions, one per map.
    let t_sphere = Instant::now();
    let own_sub = sample_sphere(
        &own.map,
        &SphereRegion {
            center: matched.own_position,
            radius,
        },
    );
    let inc_sub = sample_sphere(
        &incoming.map,
        &SphereRegion {
            center: matched.incoming_position,
            radius,
        },
    );
    let sphere_s = t_sphere.elapsed().as_secs_f64();

    // Plane-to-plane refinement of the initial guess on the submaps.
    let t_reg = Instant::now();
    let own_prep = prepare_cloud(&own_sub, params).map_err(|e| e.in_stage("registration"))?;
    let inc_prep = prepare_cloud(&inc_sub, params).map_err(|e| e.in_stage("registration"))?;
    let refined = gicp_register(&inc_prep, &own_prep, &initial, params)
        .map_err(|e| e.in_stage("registration"))?;
    let registration_s = t_reg.elapsed().as_secs_f64();
    let transform = refined.transform;
    let total_s = t_start.elapsed().as_secs_f64();

    let (overlap_percent, t_e, r_e) = match ground_truth {
        Some(gt) => {
            let err = transform_error(gt, &transform).map_err(|e| e.in_stage("evaluation"))?;
            let overlap = compute_overlap_percent(&own.map, &incoming.map, gt, OVERLAP_VOXEL)
                .map_err(|e| e.in_stage("evaluation"))?;
            (
                Some(overlap),
                Some(err.translation_error),
                Some(err.rotation_error),
            )
        }
        None => (None, None, None),
    };

    let mut merged = PointCloud::new();
    merged.points.reserve(own.map.len() + incoming.map.len());
    merged.points.extend_from_slice(&own.map.points);
    merged
        .points
        .extend(incoming.map.iter().map(|p| transform.apply(p)));

    let report = MergeReport {
        transform,
        points_m1: own.map.len(),
        points_m2: incoming.map.len(),
        trajectory_lengths: [own.trajectory.path_length(), incoming.trajectory.path_length()],
        overlap_percent,
        t_e,
        r_e,
        timings: StageTimings {
            query: query_s,
            yaw: yaw_s,
            sphere: sphere_s,
            registration: registration_s,
            total: total_s,
        },
        sphere_radius: radius,
        matched,
    };
    Ok((merged, report, initial))
}

fn record_for(records: &[DescriptorRecord], timestep: u32) -> &DescriptorRecord {
    records
        .iter()
        .find(|r| r.timestep == timestep)
        .expect("matched timestep originates from these records")
}

/// A recursive merge that failed partway: the error, the fold it happened
/// at, and the reports of the folds that did complete.
#[derive(Debug)]
pub struct RecursiveMergeError {
    pub failed_at: usize,
    pub error: FrameError,
    pub completed: Vec<MergeReport>,
}

impl std::fmt::Display for RecursiveMergeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "merge fold {} failed: {}", self.failed_at, self.error)
    }
}

impl std::error::Error for RecursiveMergeError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Fold a list of runs left to right: each step merges the next run into the
/// accumulated map, transforms the absorbed run's trajectory and records
/// into the accumulated frame, and renumbers its timesteps past the existing
/// ones so later queries can match against any earlier territory.
///
/// `ground_truths`, when given, holds one transform per fold: the alignment
/// of run i+1's frame into run 0's frame (the accumulated map never leaves
/// run 0's frame).
pub fn merge_recursive(
    runs: Vec<RobotRun>,
    radius: f64,
    params: &RegistrationParams,
    ground_truths: Option<&[TransformSE3]>,
) -> std::result::Result<(PointCloud, Vec<MergeReport>), RecursiveMergeError> {
    if runs.len() < 2 {
        return Err(RecursiveMergeError {
            failed_at: 0,
            error: FrameError::TooFewRuns {
                got: runs.len(),
                need: 2,
            },
            completed: Vec::new(),
        });
    }
    if let Some(gts) = ground_truths {
        assert_eq!(
            gts.len(),
            runs.len() - 1,
            "one ground truth per fold step expected"
        );
    }
    let mut reports = Vec::with_capacity(runs.len() - 1);
    let mut iter = runs.into_iter();
    let mut acc = iter.next().expect("length checked");
    for (fold, incoming) in iter.enumerate() {
        let gt = ground_truths.map(|g| &g[fold]);
        let (merged, report) = match merge_pair(&acc, &incoming, radius, params, gt) {
            Ok(ok) => ok,
            Err(error) => {
                return Err(RecursiveMergeError {
                    failed_at: fold,
                    error,
                    completed: reports,
                })
            }
        };
        acc = absorb(acc, incoming, &report.transform, merged);
        reports.push(report);
    }
    Ok((acc.map, reports))
}

/// Extend the accumulated run with an absorbed one: its map points were
/// already transformed into the merged cloud; its trajectory poses and
/// descriptor records are re-expressed in the accumulated frame and its
/// timesteps are renumbered to continue after the accumulated ones.
fn absorb(
    acc: RobotRun,
    incoming: RobotRun,
    transform: &TransformSE3,
    merged: PointCloud,
) -> RobotRun {
    let offset = acc
        .trajectory
        .poses()
        .last()
        .map(|p| p.timestep + 1)
        .unwrap_or(0);
    let yaw_shift = transform.yaw();
    let mut poses: Vec<TrajectoryPose> = acc.trajectory.poses().to_vec();
    poses.extend(incoming.trajectory.poses().iter().map(|p| TrajectoryPose {
        timestep: p.timestep + offset,
        position: transform.apply(&p.position),
        yaw: wrap_angle(p.yaw + yaw_shift),
    }));
    let mut records = acc.records;
    records.extend(incoming.records.into_iter().map(|mut r| {
        r.position = transform.apply(&r.position);
        r.timestep += offset;
        r
    }));
    RobotRun {
        map: merged,
        trajectory: Trajectory::new(poses).expect("renumbered timesteps stay increasing"),
        records,
    }
}

/// Overlap between two maps as the voxel-set intersection over the smaller
/// voxel set, in percent, after aligning `m2` with the ground truth.
pub fn compute_overlap_percent(
    m1: &PointCloud,
    m2: &PointCloud,
    gt: &TransformSE3,
    voxel: f64,
) -> Result<f64> {
    assert!(voxel > 0.0, "voxel edge must be positive");
    if m1.is_empty() || m2.is_empty() {
        return Err(FrameError::EmptyCloud);
    }
    let v1: std::collections::HashSet<(i64, i64, i64)> =
        m1.iter().map(|p| voxel_key(p, voxel)).collect();
    let v2: std::collections::HashSet<(i64, i64, i64)> = m2
        .iter()
        .map(|p| voxel_key(&gt.apply(p), voxel))
        .collect();
    let common = v1.intersection(&v2).count();
    Ok(100.0 * common as f64 / v1.len().min(v2.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::extract_descriptors;
    use crate::geometry::Point3;
    use crate::projection::{spherical_project, ProjectionConfig};
    use nalgebra::Vector3;

    /// A closed rectangular room sampled on a grid: floor, ceiling, and four
    /// walls, sized `lx` x `ly` x `h` with one corner at the origin.
    fn room_cloud(lx: f64, ly: f64, h: f64, step: f64) -> PointCloud {
        let mut pts = Vec::new();
        let nx = (lx / step).round() as usize;
        let ny = (ly / step).round() as usize;
        let nz = (h / step).round() as usize;
        for ix in 0..=nx {
            for iy in 0..=ny {
                let (x, y) = (ix as f64 * step, iy as f64 * step);
                pts.push(Point3::new(x, y, 0.0));
                pts.push(Point3::new(x, y, h));
            }
        }
        for ix in 0..=nx {
            for iz in 1..nz {
                let (x, z) = (ix as f64 * step, iz as f64 * step);
                pts.push(Point3::new(x, 0.0, z));
                pts.push(Point3::new(x, ly, z));
            }
        }
        for iy in 1..ny {
            for iz in 1..nz {
                let (y, z) = (iy as f64 * step, iz as f64 * step);
                pts.push(Point3::new(0.0, y, z));
                pts.push(Point3::new(lx, y, z));
            }
        }
        PointCloud::from_points(pts)
    }

    /// What a sensor at `position` with heading `yaw` would record of the
    /// room: the room re-expressed in the sensor frame.
    fn scan_from(world: &PointCloud, position: Point3, yaw: f64) -> PointCloud {
        let pose = TransformSE3::from_yaw_translation(yaw, position.vector());
        world.transformed(&pose.inverse())
    }

    /// Build a run over the given world-frame poses, with the whole run
    /// re-expressed in a local frame (`frame` maps world to local).
    fn run_in_frame(
        world: &PointCloud,
        poses: &[(Point3, f64)],
        frame: &TransformSE3,
    ) -> RobotRun {
        let config = ProjectionConfig::default();
        let mut map = PointCloud::new();
        let mut records = Vec::new();
        let mut traj = Vec::new();
        for (k, (position, yaw)) in poses.iter().enumerate() {
            let scan = scan_from(world, *position, *yaw);
            let image = spherical_project(&scan, &config).unwrap();
            let (q, w) = extract_descriptors(&image).unwrap();
            let world_pose = TransformSE3::from_yaw_translation(*yaw, position.vector());
            let placed = frame.compose(&world_pose);
            for p in scan.iter() {
                map.push(placed.apply(p));
            }
            let local_pos = frame.apply(position);
            records.push(DescriptorRecord {
                query: q,
                orient: w,
                position: local_pos,
                timestep: k as u32,
            });
            traj.push(TrajectoryPose {
                timestep: k as u32,
                position: local_pos,
                yaw: wrap_angle(yaw + frame.yaw()),
            });
        }
        RobotRun {
            map,
            trajectory: Trajectory::new(traj).unwrap(),
            records,
        }
    }

    fn shared_room() -> PointCloud {
        room_cloud(12.0, 8.0, 3.0, 0.15)
    }

    fn room_poses() -> Vec<(Point3, f64)> {
        vec![
            (Point3::new(2.0, 1.5, 1.2), 0.5),
            (Point3::new(6.0, 2.0, 1.2), 3.5),
            (Point3::new(9.0, 5.5, 1.2), -1.0),
        ]
    }

    #[test]
    fn self_merge_is_identity_and_doubles_the_count() {
        let room = shared_room();
        let run = run_in_frame(&room, &room_poses(), &TransformSE3::identity());
        let params = RegistrationParams::default();
        let (merged, report) = merge_pair(&run, &run, 20.0, &params, None).unwrap();
        assert_eq!(merged.len(), 2 * run.map.len());
        assert!(report.transform.translation().norm() <= 1e-6);
        let r_err = crate::geometry::rotation_error(
            report.transform.rotation(),
            &nalgebra::Matrix3::identity(),
        )
        .unwrap()
        .geodesic_deg
        .to_radians();
        assert!(r_err <= 1e-5);
        assert_eq!(report.points_m1, run.map.len());
        assert_eq!(report.points_m2, run.map.len());
        assert!(report.overlap_percent.is_none());
        assert!(report.t_e.is_none());
    }

    #[test]
    fn frame_offset_between_runs_is_recovered_with_heading_compensation() {
        let room = shared_room();
        let own = run_in_frame(&room, &room_poses(), &TransformSE3::identity());
        // Same physical excursion, recorded in a rotated+shifted local frame.
        let g = TransformSE3::from_yaw_translation(2.0944, Vector3::new(4.0, -3.0, 0.0));
        let incoming = run_in_frame(&room, &room_poses(), &g);
        let params = RegistrationParams::default();
        let gt = g.inverse();
        let (merged, report) = merge_pair(&own, &incoming, 20.0, &params, Some(&gt)).unwrap();
        assert_eq!(merged.len(), own.map.len() + incoming.map.len());
        assert!(
            report.t_e.unwrap() <= 0.05,
            "translation error {}",
            report.t_e.unwrap()
        );
        assert!(
            report.r_e.unwrap() <= 0.5,
            "rotation error {}",
            report.r_e.unwrap()
        );
        // Same data in both frames: the overlap must be total.
        assert!(report.overlap_percent.unwrap() >= 99.0);
    }

    #[test]
    fn own_points_pass_through_and_incoming_points_are_transformed_exactly() {
        let room = shared_room();
        let own = run_in_frame(&room, &room_poses(), &TransformSE3::identity());
        let g = TransformSE3::from_yaw_translation(1.0, Vector3::new(2.0, 1.0, 0.0));
        let incoming = run_in_frame(&room, &room_poses(), &g);
        let params = RegistrationParams::default();
        let (merged, report) = merge_pair(&own, &incoming, 20.0, &params, None).unwrap();
        let n1 = own.map.len();
        assert_eq!(&merged.points[..n1], &own.map.points[..]);
        for (i, p) in incoming.map.iter().enumerate() {
            let expected = report.transform.apply(p);
            let got = merged.points[n1 + i];
            assert!(expected.distance(&got) <= 1e-12);
        }
    }

    #[test]
    fn swapping_the_runs_inverts_the_transform() {
        let room = shared_room();
        let own = run_in_frame(&room, &room_poses(), &TransformSE3::identity());
        let g = TransformSE3::from_yaw_translation(-0.9, Vector3::new(3.0, 2.0, 0.0));
        let incoming = run_in_frame(&room, &room_poses(), &g);
        let params = RegistrationParams::default();
        let (_, forward) = merge_pair(&own, &incoming, 20.0, &params, None).unwrap();
        let (_, backward) = merge_pair(&incoming, &own, 20.0, &params, None).unwrap();
        let err = transform_error(&forward.transform.inverse(), &backward.transform).unwrap();
        assert!(err.translation_error <= 0.05, "{}", err.translation_error);
        assert!(err.rotation_error <= 0.5, "{}", err.rotation_error);
    }

    #[test]
    fn merge_is_deterministic_across_repeats() {
        let room = shared_room();
        let own = run_in_frame(&room, &room_poses(), &TransformSE3::identity());
        let g = TransformSE3::from_yaw_translation(0.7, Vector3::new(1.0, -2.0, 0.0));
        let incoming = run_in_frame(&room, &room_poses(), &g);
        let params = RegistrationParams::default();
        let (_, a) = merge_pair(&own, &incoming, 20.0, &params, None).unwrap();
        let (_, b) = merge_pair(&own, &incoming, 20.0, &params, None).unwrap();
        assert_eq!(a.transform.to_row_major(), b.transform.to_row_major());
    }

    #[test]
    fn timings_cover_the_stages() {
        let room = shared_room();
        let run = run_in_frame(&room, &room_poses(), &TransformSE3::identity());
        let params = RegistrationParams::default();
        let (_, report) = merge_pair(&run, &run, 20.0, &params, None).unwrap();
        let t = &report.timings;
        let sum = t.query + t.yaw + t.sphere + t.registration;
        assert!(t.total >= sum - 1e-6);
    }

    #[test]
    fn recursive_merge_of_two_runs_matches_merge_pair() {
        let room = shared_room();
        let own = run_in_frame(&room, &room_poses(), &TransformSE3::identity());
        let g = TransformSE3::from_yaw_translation(0.4, Vector3::new(1.5, 0.5, 0.0));
        let incoming = run_in_frame(&room, &room_poses(), &g);
        let params = RegistrationParams::default();
        let (pair_map, pair_report) = merge_pair(&own, &incoming, 20.0, &params, None).unwrap();
        let (rec_map, reports) =
            merge_recursive(vec![own, incoming], 20.0, &params, None).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(rec_map.points, pair_map.points);
        assert_eq!(
            reports[0].transform.to_row_major(),
            pair_report.transform.to_row_major()
        );
    }

    #[test]
    fn recursive_merge_folds_three_frames_back_together() {
        let room = shared_room();
        let a = run_in_frame(&room, &room_poses(), &TransformSE3::identity());
        let g1 = TransformSE3::from_yaw_translation(1.8, Vector3::new(5.0, -2.0, 0.0));
        let g2 = TransformSE3::from_yaw_translation(-2.4, Vector3::new(-3.0, 4.0, 0.0));
        let b = run_in_frame(&room, &room_poses(), &g1);
        let c = run_in_frame(&room, &room_poses(), &g2);
        let params = RegistrationParams::default();
        let gts = [g1.inverse(), g2.inverse()];
        let total: usize = [&a, &b, &c].iter().map(|r| r.map.len()).sum();
        let (map, reports) =
            merge_recursive(vec![a, b, c], 20.0, &params, Some(&gts)).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(map.len(), total);
        for (i, rep) in reports.iter().enumerate() {
            assert!(rep.t_e.unwrap() <= 0.05, "fold {i}: {}", rep.t_e.unwrap());
            assert!(rep.r_e.unwrap() <= 0.5, "fold {i}: {}", rep.r_e.unwrap());
        }
    }

    #[test]
    fn fewer_than_two_runs_is_rejected() {
        let params = RegistrationParams::default();
        let err = merge_recursive(Vec::new(), 10.0, &params, None).unwrap_err();
        assert!(matches!(
            err.error,
            FrameError::TooFewRuns { got: 0, need: 2 }
        ));
        assert!(err.completed.is_empty());
    }

    #[test]
    fn disjoint_vertical_structure_fails_staged_instead_of_merging_silently() {
        // Two rooms with the same footprint but different heights, scanned
        // from heights chosen so the overlap spheres contain only horizontal
        // patches more than a gate apart: floor+ceiling vs floor only.
        let room_low = room_cloud(12.0, 8.0, 3.0, 0.15);
        let room_high = room_cloud(12.0, 8.0, 6.0, 0.15);
        let poses_low = vec![
            (Point3::new(5.0, 4.0, 1.2), 0.3),
            (Point3::new(7.0, 4.0, 1.2), 2.0),
        ];
        let poses_high = vec![
            (Point3::new(5.0, 4.0, 2.5), -0.8),
            (Point3::new(7.0, 4.0, 2.5), 1.1),
        ];
        let own = run_in_frame(&room_low, &poses_low, &TransformSE3::identity());
        let incoming = run_in_frame(&room_high, &poses_high, &TransformSE3::identity());
        let params = RegistrationParams::default();
        let err = merge_pair(&own, &incoming, 3.0, &params, None).unwrap_err();
        assert_eq!(err.stage(), Some("registration"));
        assert!(matches!(
            err,
            FrameError::Stage { source, .. } if matches!(*source, FrameError::CaptureRange)
        ));
    }

    #[test]
    fn orphan_record_is_caught_before_any_work() {
        let room = shared_room();
        let mut run = run_in_frame(&room, &room_poses(), &TransformSE3::identity());
        run.records[1].timestep = 77;
        let params = RegistrationParams::default();
        let err = merge_pair(&run, &run, 10.0, &params, None).unwrap_err();
        assert_eq!(err.stage(), Some("input-validation"));
    }

    #[test]
    fn overlap_percent_of_identical_clouds_is_total() {
        let c = room_cloud(6.0, 4.0, 3.0, 0.2);
        let p = compute_overlap_percent(&c, &c, &TransformSE3::identity(), 0.5).unwrap();
        assert!((p - 100.0).abs() <= 1e-12);
    }

    #[test]
    fn overlap_percent_of_disjoint_clouds_is_zero() {
        let a = room_cloud(6.0, 4.0, 3.0, 0.2);
        let b = a.transformed(&TransformSE3::from_yaw_translation(
            0.0,
            Vector3::new(100.0, 0.0, 0.0),
        ));
        let p = compute_overlap_percent(&a, &b, &TransformSE3::identity(), 0.5).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn overlap_percent_of_a_half_shifted_corridor_is_about_half() {
        // A flat strip of points; the second copy shifted by half its extent.
        let mut pts = Vec::new();
        for ix in 0..400 {
            for iy in 0..20 {
                pts.push(Point3::new(ix as f64 * 0.25, iy as f64 * 0.25, 0.0));
            }
        }
        let a = PointCloud::from_points(pts);
        let b = a.transformed(&TransformSE3::from_yaw_translation(
            0.0,
            Vector3::new(50.0, 0.0, 0.0),
        ));
        let p = compute_overlap_percent(&a, &b, &TransformSE3::identity(), 0.5).unwrap();
        assert!((p - 50.0).abs() <= 5.0, "overlap {p}");
    }

    #[test]
    fn overlap_percent_rejects_empty_clouds() {
        let c = room_cloud(6.0, 4.0, 3.0, 0.2);
        let empty = PointCloud::new();
        assert!(matches!(
            compute_overlap_percent(&empty, &c, &TransformSE3::identity(), 0.5),
            Err(FrameError::EmptyCloud)
        ));
    }

    #[test]
    fn report_serializes_with_row_major_transform_and_optional_fields_absent() {
        let room = shared_room();
        let run = run_in_frame(&room, &room_poses(), &TransformSE3::identity());
        let params = RegistrationParams::default();
        let (_, report) = merge_pair(&run, &run, 20.0, &params, None).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["transform"].as_array().unwrap().len(), 16);
        assert!(json.get("t_e").is_none());
        assert!(json.get("r_e").is_none());
        assert!(json.get("overlap_percent").is_none());
        assert!(json["match"].is_object());
        let back: MergeReport = serde_json::from_value(json).unwrap();
        assert_eq!(
            back.transform.to_row_major(),
            report.transform.to_row_major()
        );
        assert_eq!(back.points_m1, report.points_m1);
    }
}
