//! Rigid-body transforms, point containers, trajectories, and the error
//! metrics used to score an estimated alignment against ground truth.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{FrameError, Result};

/// Orthonormality tolerance accepted on rotation inputs.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Drift threshold beyond which composed rotations are re-orthonormalized.
const REORTHONORMALIZE_DRIFT: f64 = 1e-12;

/// A point in 3-D Cartesian space, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Point3::new(v.x, v.y, v.z)
    }
}

/// An unordered set of points. Order is preserved as stored, but no
/// operation in this crate attaches meaning to it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new() -> Self {
        PointCloud { points: Vec::new() }
    }

    pub fn from_points(points: Vec<Point3>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, p: Point3) {
        self.points.push(p);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// Index of the first non-finite point, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.points.iter().position(|p| !p.is_finite())
    }

    /// The cloud with `t` applied to every point.
    pub fn transformed(&self, t: &TransformSE3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
        }
    }
}

/// A rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSE3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Frobenius norm of `R^T R - I`, the orthonormality residual.
pub fn orthonormality_residual(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}

fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    let residual = orthonormality_residual(r);
    let det = r.determinant();
    if residual > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(FrameError::NonOrthonormalRotation {
            residual: residual.max((det - 1.0).abs()),
        });
    }
    Ok(())
}

/// Project a near-rotation back onto SO(3) via polar decomposition.
fn reorthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let u = svd.u.expect("svd of 3x3 always yields u");
    let vt = svd.v_t.expect("svd of 3x3 always yields v_t");
    let mut fixed = u * vt;
    if fixed.determinant() < 0.0 {
        // Flip the singular direction with the smallest singular value.
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        fixed = u2 * vt;
    }
    fixed
}

/// Rodrigues' formula: the rotation matrix for a rotation vector.
pub fn rotation_exp(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    let k = skew(omega);
    if theta < 1e-12 {
        // Second-order series; exact to machine precision at this scale.
        return Matrix3::identity() + k + (k * k) * 0.5;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Matrix3::identity() + k * a + (k * k) * b
}

/// Cross-product matrix of a vector.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

impl TransformSE3 {
    /// Build from parts, rejecting rotations that are not orthonormal with
    /// determinant +1 within `ROTATION_TOLERANCE`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation)?;
        Ok(TransformSE3 {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        TransformSE3 {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Internal constructor for rotations produced by our own arithmetic:
    /// snaps accumulated drift back onto SO(3) instead of erroring.
    pub(crate) fn from_parts_snapped(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let rotation = if orthonormality_residual(&rotation) > REORTHONORMALIZE_DRIFT {
            reorthonormalize(&rotation)
        } else {
            rotation
        };
        TransformSE3 {
            rotation,
            translation,
        }
    }

    /// Right-handed rotation about +z by `yaw` radians, then translation.
    pub fn from_yaw_translation(yaw: f64, translation: Vector3<f64>) -> Self {
        let (s, c) = yaw.sin_cos();
        let rotation = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        TransformSE3 {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from_vector(self.rotation * p.vector() + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v + self.translation
    }

    /// `self ∘ other`: apply `other` first, then `self`. Composed rotations
    /// are snapped back onto SO(3) once numerical drift becomes measurable.
    pub fn compose(&self, other: &TransformSE3) -> TransformSE3 {
        let mut rotation = self.rotation * other.rotation;
        if orthonormality_residual(&rotation) > REORTHONORMALIZE_DRIFT {
            rotation = reorthonormalize(&rotation);
        }
        TransformSE3 {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> TransformSE3 {
        let rt = self.rotation.transpose();
        TransformSE3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Yaw component: the angle of the rotated +x axis in the xy plane.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    /// Row-major 4x4 homogeneous matrix, flattened to 16 values.
    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
            0.0,
            0.0,
            0.0,
            1.0,
        ]
    }

    /// Parse a row-major 4x4 homogeneous matrix. The bottom row must be
    /// (0, 0, 0, 1) within `ROTATION_TOLERANCE` and the rotation block
    /// orthonormal.
    pub fn from_row_major(m: &[f64; 16]) -> Result<Self> {
        let bottom_ok = m[12].abs() <= ROTATION_TOLERANCE
            && m[13].abs() <= ROTATION_TOLERANCE
            && m[14].abs() <= ROTATION_TOLERANCE
            && (m[15] - 1.0).abs() <= ROTATION_TOLERANCE;
        if !bottom_ok {
            return Err(FrameError::NonOrthonormalRotation { residual: f64::NAN });
        }
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vector3::new(m[3], m[7], m[11]);
        TransformSE3::new(rotation, translation)
    }
}

/// Distance between a ground-truth translation and an estimate, meters.
pub fn translation_error(t_gt: &Vector3<f64>, t: &Vector3<f64>) -> f64 {
    (t_gt - t).norm()
}

/// Both rotation-error readings for a ground-truth/estimate pair.
#[derive(Debug, Clone, Copy)]
pub struct RotationErrorMetrics {
    /// Geodesic angle between the rotations, degrees. The headline metric.
    pub geodesic_deg: f64,
    /// Frobenius norm of `R_gt R^-1 - I`, kept as a secondary diagnostic.
    pub frobenius: f64,
}

/// Compare two rotations. Rejects inputs that are not orthonormal with
/// determinant +1.
pub fn rotation_error(r_gt: &Matrix3<f64>, r: &Matrix3<f64>) -> Result<RotationErrorMetrics> {
    check_rotation(r_gt)?;
    check_rotation(r)?;
    let rel = r_gt * r.transpose();
    let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let geodesic_deg = cos.acos().to_degrees();
    let frobenius = (rel - Matrix3::identity()).norm();
    Ok(RotationErrorMetrics {
        geodesic_deg,
        frobenius,
    })
}

/// Translation and rotation error of an estimated transform against truth.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ErrorPair {
    /// Meters.
    pub translation_error: f64,
    /// Degrees, geodesic.
    pub rotation_error: f64,
}

/// Score `estimate` against `ground_truth`.
pub fn transform_error(ground_truth: &TransformSE3, estimate: &TransformSE3) -> Result<ErrorPair> {
    let rot = rotation_error(ground_truth.rotation(), estimate.rotation())?;
    Ok(ErrorPair {
        translation_error: translation_error(ground_truth.translation(), estimate.translation()),
        rotation_error: rot.geodesic_deg,
    })
}

/// One trajectory sample: where the sensor was at a timestep and which way
/// it pointed in the map frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPose {
    pub timestep: u32,
    pub position: Point3,
    pub yaw: f64,
}

/// A time-ordered polyline of sensor poses in one robot's map frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    poses: Vec<TrajectoryPose>,
}

impl Trajectory {
    /// Timesteps must be strictly increasing.
    pub fn new(poses: Vec<TrajectoryPose>) -> Result<Self> {
        for pair in poses.windows(2) {
            if pair[1].timestep <= pair[0].timestep {
                return Err(FrameError::OrphanRecord {
                    timestep: pair[1].timestep,
                });
            }
        }
        Ok(Trajectory { poses })
    }

    pub fn poses(&self) -> &[TrajectoryPose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn lookup(&self, timestep: u32) -> Option<&TrajectoryPose> {
        self.poses
            .binary_search_by_key(&timestep, |p| p.timestep)
            .ok()
            .map(|i| &self.poses[i])
    }

    /// Polyline length of the traveled path, meters.
    pub fn path_length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| w[0].position.distance(&w[1].position))
            .sum()
    }

    /// The trajectory carried into another frame: positions are transformed
    /// and headings advanced by the transform's yaw.
    pub fn transformed(&self, t: &TransformSE3) -> Trajectory {
        let dyaw = t.yaw();
        Trajectory {
            poses: self
                .poses
                .iter()
                .map(|p| TrajectoryPose {
                    timestep: p.timestep,
                    position: t.apply(&p.position),
                    yaw: wrap_angle(p.yaw + dyaw),
                })
                .collect(),
        }
    }
}

/// Wrap an angle to the half-open interval (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}
