//! Trajectories as CSV with the header `k,x,y,z,yaw`, one row per timestep.
//! Floats are written with 15 significant digits, so positions round-trip
//! well below the nanometer.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::geometry::{Point3, Trajectory, TrajectoryPose};
use crate::io::{byte_lines, io_error, parse_error};

const HEADER: &str = "k,x,y,z,yaw";

pub fn write_trajectory_csv(trajectory: &Trajectory, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(trajectory.len() * 80 + 16);
    writeln!(out, "{HEADER}").expect("writing to a Vec cannot fail");
    for p in trajectory.poses() {
        writeln!(
            out,
            "{},{:.14e},{:.14e},{:.14e},{:.14e}",
            p.timestep, p.position.x, p.position.y, p.position.z, p.yaw
        )
        .expect("writing to a Vec cannot fail");
    }
    fs::write(path, out).map_err(|e| io_error(path, e))
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    let mut poses: Vec<TrajectoryPose> = Vec::new();
    let mut saw_header = false;
    for (offset, raw) in byte_lines(&bytes) {
        let line = std::str::from_utf8(raw)
            .map_err(|_| parse_error(path, offset, "line is not valid utf-8"))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !saw_header {
            if trimmed != HEADER {
                return Err(parse_error(
                    path,
                    offset,
                    format!("expected header `{HEADER}`, found `{trimmed}`"),
                ));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_error(
                path,
                offset,
                format!("expected 5 columns, found {}", fields.len()),
            ));
        }
        let timestep: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_error(path, offset, format!("bad timestep `{}`", fields[0])))?;
        let mut values = [0.0f64; 4];
        for (v, field) in values.iter_mut().zip(&fields[1..]) {
            *v = field
                .trim()
                .parse()
                .map_err(|_| parse_error(path, offset, format!("bad float `{field}`")))?;
            if !v.is_finite() {
                return Err(parse_error(path, offset, "non-finite value"));
            }
        }
        if let Some(last) = poses.last() {
            if timestep <= last.timestep {
                return Err(parse_error(
                    path,
                    offset,
                    format!(
                        "timestep {timestep} does not increase past {}",
                        last.timestep
                    ),
                ));
            }
        }
        poses.push(TrajectoryPose {
            timestep,
            position: Point3::new(values[0], values[1], values[2]),
            yaw: values[3],
        });
    }
    if !saw_header {
        return Err(parse_error(path, bytes.len() as u64, "file has no header"));
    }
    Ok(Trajectory::new(poses).expect("monotonicity was checked row by row"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::FrameError;
    use std::f64::consts::PI;
    use tempfile::tempdir;

    fn sample() -> Trajectory {
        Trajectory::new(vec![
            TrajectoryPose {
                timestep: 0,
                position: Point3::new(0.0, 0.0, 1.0),
                yaw: 0.0,
            },
            TrajectoryPose {
                timestep: 1,
                position: Point3::new(1.000000001, -2.5, 1.0),
                yaw: PI / 3.0,
            },
            TrajectoryPose {
                timestep: 5,
                position: Point3::new(255.123456789, 60.0, 7.25),
                yaw: -PI + 1e-9,
            },
        ])
        .unwrap()
    }

    #[test]
    fn round_trip_is_within_a_nanometer() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let traj = sample();
        write_trajectory_csv(&traj, &path).unwrap();
        let back = read_trajectory_csv(&path).unwrap();
        assert_eq!(back.len(), traj.len());
        for (a, b) in traj.poses().iter().zip(back.poses()) {
            assert_eq!(a.timestep, b.timestep);
            assert!((a.position.x - b.position.x).abs() <= 1e-9);
            assert!((a.position.y - b.position.y).abs() <= 1e-9);
            assert!((a.position.z - b.position.z).abs() <= 1e-9);
            assert!((a.yaw - b.yaw).abs() <= 1e-9);
        }
    }

    #[test]
    fn rows_carry_at_least_nine_significant_digits() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        write_trajectory_csv(&sample(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let row = text.lines().nth(1).unwrap();
        for field in row.split(',').skip(1) {
            let digits = field.chars().filter(|c| c.is_ascii_digit()).count();
            assert!(digits >= 9, "field `{field}` has too few digits");
        }
    }

    #[test]
    fn wrong_header_is_rejected_at_offset_zero() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "time,x,y,z,yaw\n0,0,0,0,0\n").unwrap();
        match read_trajectory_csv(&path) {
            Err(FrameError::Parse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_increasing_timesteps_are_rejected_with_the_row_offset() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let text = "k,x,y,z,yaw\n3,0,0,0,0\n3,1,1,1,0\n";
        fs::write(&path, text).unwrap();
        match read_trajectory_csv(&path) {
            Err(FrameError::Parse { offset, message, .. }) => {
                assert_eq!(offset, text.find("3,1").unwrap() as u64);
                assert!(message.contains("increase"));
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_floats_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "k,x,y,z,yaw\n0,1.0,two,3.0,0\n").unwrap();
        assert!(read_trajectory_csv(&path).unwrap_err().is_parse());
    }
}
