//! Place and orientation descriptors extracted from spherical depth images,
//! and the circular cross-correlation that regresses a relative yaw angle
//! between two scans of the same place.
//!
//! The place descriptor stacks, for each of the 16 elevation rings, the
//! magnitudes of the ring's discrete Fourier transform at the four lowest
//! non-constant frequencies. Magnitudes ignore phase, so the vector does not
//! move when the scan is rotated about +z; that makes it usable as a
//! rotation-invariant lookup key. The orientation descriptor is the plain
//! azimuthal range profile (64 groups of 4 adjacent columns), which rotates
//! with the scan and therefore carries the yaw information the place
//! descriptor deliberately discards.

use crate::error::{FrameError, Result};
use crate::geometry::Point3;
use crate::projection::{DepthImage, ProjectionConfig};

/// Descriptor dimension shared by both vectors.
pub const DESCRIPTOR_LEN: usize = 64;

/// Rings (rows) consumed per image.
pub const RINGS: usize = 16;

/// DFT frequencies kept per ring.
pub const FREQS_PER_RING: usize = 4;

/// Image columns folded into one orientation group.
pub const COLS_PER_GROUP: usize = 4;

/// Width the extractor expects: 64 groups of 4 columns.
pub const EXPECTED_WIDTH: usize = DESCRIPTOR_LEN * COLS_PER_GROUP;

/// Vertical field of view of the shared record grid, degrees.
///
/// Records from different robots are compared entry by entry, so every
/// robot must project its scans onto elevation bins with the same physical
/// meaning regardless of its sensor's own aperture. 32 degrees covers both
/// supported sensor apertures (20 and 30 degrees), and with 2-degree bins
/// neither sensor family's beam elevations fall on a bin boundary, so a
/// beam's returns never straddle two rings.
pub const RECORD_VFOV_DEG: f64 = 32.0;

/// The projection grid descriptor records are extracted on: 16 rings of
/// 256 columns spanning [`RECORD_VFOV_DEG`]. Scans from a narrower sensor
/// leave the outer rings empty, which reads as zero range.
pub fn record_projection(max_range: f64) -> ProjectionConfig {
    ProjectionConfig {
        height: RINGS,
        width: EXPECTED_WIDTH,
        vfov_deg: RECORD_VFOV_DEG,
        max_range,
    }
}

/// Norm below which a place descriptor is treated as pure rounding noise
/// and snapped to the all-zero vector.
const ZERO_SNAP: f64 = 1e-9;

/// Rotation-invariant place signature: unit L2 norm, or all-zero for a
/// featureless scan.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryDescriptor {
    values: [f64; DESCRIPTOR_LEN],
}

impl QueryDescriptor {
    /// Accepts a vector that is already unit-norm (within 1e-9) or all-zero.
    pub fn new(values: [f64; DESCRIPTOR_LEN]) -> Result<Self> {
        let norm = l2(&values);
        if norm != 0.0 && (norm - 1.0).abs() > 1e-9 {
            return Err(FrameError::InvalidDescriptor {
                reason: "place descriptor must be unit norm or all-zero",
            });
        }
        Ok(QueryDescriptor { values })
    }

    /// Scale an arbitrary vector to unit norm; a near-zero vector becomes
    /// exactly zero.
    pub fn normalized(mut values: [f64; DESCRIPTOR_LEN]) -> Self {
        let norm = l2(&values);
        if norm <= ZERO_SNAP {
            values = [0.0; DESCRIPTOR_LEN];
        } else {
            for v in values.iter_mut() {
                *v /= norm;
            }
        }
        QueryDescriptor { values }
    }

    pub fn values(&self) -> &[f64; DESCRIPTOR_LEN] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn distance(&self, other: &QueryDescriptor) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Yaw-equivariant azimuthal range profile: non-negative group means that
/// circularly shift when the scan rotates.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientDescriptor {
    values: [f64; DESCRIPTOR_LEN],
}

impl OrientDescriptor {
    pub fn new(values: [f64; DESCRIPTOR_LEN]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(FrameError::InvalidDescriptor {
                reason: "orientation profile must be finite and non-negative",
            });
        }
        Ok(OrientDescriptor { values })
    }

    pub fn values(&self) -> &[f64; DESCRIPTOR_LEN] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Both descriptors for one keyframe, tagged with where and when the scan
/// was taken in the robot's own map frame.
#[derive(Debug, Clone)]
pub struct DescriptorRecord {
    pub query: QueryDescriptor,
    pub orient: OrientDescriptor,
    pub position: Point3,
    pub timestep: u32,
}

fn l2(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Compute both descriptors from a 16x256 depth image. Cells with no return
/// participate as range 0, so missing structure is itself a feature.
pub fn extract_descriptors(image: &DepthImage) -> Result<(QueryDescriptor, OrientDescriptor)> {
    if image.height() != RINGS || image.width() != EXPECTED_WIDTH {
        return Err(FrameError::ImageShape {
            height: image.height(),
            width: image.width(),
            expected_height: RINGS,
            expected_width: EXPECTED_WIDTH,
        });
    }
    let w = image.width();

    // One shared table of cos/sin at the image's angular resolution, indexed
    // modulo the width so the transform is exactly periodic in the shift.
    let mut cos_table = [0.0f64; EXPECTED_WIDTH];
    let mut sin_table = [0.0f64; EXPECTED_WIDTH];
    for (j, (c, s)) in cos_table.iter_mut().zip(sin_table.iter_mut()).enumerate() {
        let angle = std::f64::consts::TAU * j as f64 / w as f64;
        *c = angle.cos();
        *s = angle.sin();
    }

    let mut query = [0.0f64; DESCRIPTOR_LEN];
    for ring in 0..RINGS {
        let row = image.row(ring);
        for f in 1..=FREQS_PER_RING {
            let mut re = 0.0;
            let mut im = 0.0;
            for (c, &x) in row.iter().enumerate() {
                let j = (f * c) % w;
                re += x * cos_table[j];
                im -= x * sin_table[j];
            }
            query[ring * FREQS_PER_RING + (f - 1)] = re.hypot(im);
        }
    }

    let mut orient = [0.0f64; DESCRIPTOR_LEN];
    let cells_per_group = (RINGS * COLS_PER_GROUP) as f64;
    for (g, slot) in orient.iter_mut().enumerate() {
        let mut sum = 0.0;
        for ring in 0..RINGS {
            let row = image.row(ring);
            for c in 0..COLS_PER_GROUP {
                sum += row[g * COLS_PER_GROUP + c];
            }
        }
        *slot = sum / cells_per_group;
    }

    Ok((
        QueryDescriptor::normalized(query),
        OrientDescriptor::new(orient)?,
    ))
}

/// Regress the yaw offset between two scans from their orientation profiles.
///
/// Returns the angle in (-pi, pi] whose whole-group shift best aligns
/// `b` onto `a`: the argmax over s of `sum_i a[i] * b[(i + s) mod 64]`,
/// converted at 2*pi/64 radians per group. Correlation ties are broken
/// toward the smallest magnitude angle, preferring the positive sign when
/// magnitudes also tie. Resolution is therefore one group (5.625 degrees),
/// half a group worst-case error.
pub fn estimate_yaw(a: &OrientDescriptor, b: &OrientDescriptor) -> Result<f64> {
    if a.is_zero() || b.is_zero() {
        return Err(FrameError::DegenerateOrientationDescriptor);
    }
    let av = a.values();
    let bv = b.values();
    let n = DESCRIPTOR_LEN;
    let step = std::f64::consts::TAU / n as f64;

    let mut best_corr = f64::NEG_INFINITY;
    let mut best_angle = 0.0f64;
    for s in 0..n {
        let mut corr = 0.0;
        for i in 0..n {
            corr += av[i] * bv[(i + s) % n];
        }
        let angle = crate::geometry::wrap_angle(s as f64 * step);
        let better = corr > best_corr
            || (corr == best_corr
                && (angle.abs() < best_angle.abs()
                    || (angle.abs() == best_angle.abs() && angle > best_angle)));
        if better {
            best_corr = corr;
            best_angle = angle;
        }
    }
    Ok(best_angle)
}
