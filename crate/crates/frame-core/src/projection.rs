//! Spherical depth images: a scan collapsed onto an elevation x azimuth grid
//! of ranges, the raw material for the place and orientation descriptors.

use crate::error::{FrameError, Result};
use crate::geometry::PointCloud;

/// Grid shape and angular window for `spherical_project`.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionConfig {
    /// Elevation rows. Row 0 is the top of the vertical field of view.
    pub height: usize,
    /// Azimuth columns covering the full turn, column 0 at azimuth 0.
    pub width: usize,
    /// Full vertical field of view, degrees, centered on the horizon.
    pub vfov_deg: f64,
    /// Ranges beyond this are treated as misses, meters.
    pub max_range: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            height: 16,
            width: 256,
            vfov_deg: 30.0,
            max_range: 50.0,
        }
    }
}

/// A row-major grid of ranges. Cells that received no return hold exactly
/// 0.0; every other cell holds the smallest range that mapped into it.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl DepthImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        DepthImage {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, range: f64) {
        self.data[row * self.width + col] = range;
    }

    /// Flat row-major cell values.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// One row of ranges.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    /// Content moved `shift` columns to the right (azimuth-positive), with
    /// wraparound: `out[r][(c + shift) mod W] = in[r][c]`.
    pub fn rotated_columns(&self, shift: isize) -> DepthImage {
        let w = self.width as isize;
        let shift = shift.rem_euclid(w) as usize;
        let mut out = DepthImage::zeros(self.height, self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                let dst = (c + shift) % self.width;
                out.set(r, dst, self.get(r, c));
            }
        }
        out
    }
}

/// Slack for the inclusive field-of-view edge check, radians.
const FOV_EDGE_EPS: f64 = 1e-12;

/// Project a scan onto the spherical grid, keeping the nearest return per
/// cell. Points outside the vertical field of view or beyond `max_range`
/// are dropped. A scan containing any non-finite coordinate is rejected
/// outright. An empty cloud produces an all-zero image.
pub fn spherical_project(cloud: &PointCloud, config: &ProjectionConfig) -> Result<DepthImage> {
    if let Some(index) = cloud.first_non_finite() {
        return Err(FrameError::NonFinitePoint { index });
    }
    let mut image = DepthImage::zeros(config.height, config.width);
    let half_vfov = config.vfov_deg.to_radians() / 2.0;
    let vfov = config.vfov_deg.to_radians();
    let w = config.width as f64;
    let h = config.height as f64;

    for p in cloud.iter() {
        let range = p.norm();
        if range <= 0.0 || range > config.max_range {
            continue;
        }
        let elevation = (p.z / range).clamp(-1.0, 1.0).asin();
        // The field of view is inclusive at both edges; the epsilon keeps
        // returns computed to sit exactly on an edge from being dropped by
        // rounding in the norm or the arcsine.
        if elevation < -half_vfov - FOV_EDGE_EPS || elevation > half_vfov + FOV_EDGE_EPS {
            continue;
        }
        let elevation = elevation.clamp(-half_vfov, half_vfov);
        let mut azimuth = p.y.atan2(p.x);
        if azimuth < 0.0 {
            azimuth += std::f64::consts::TAU;
        }
        let col = ((azimuth / std::f64::consts::TAU * w) as usize).min(config.width - 1);
        let row = (((half_vfov - elevation) / vfov * h) as usize).min(config.height - 1);
        let cell = image.get(row, col);
        if cell == 0.0 || range < cell {
            image.set(row, col, range);
        }
    }
    Ok(image)
}
