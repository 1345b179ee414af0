//! Voxel-grid reduction of point clouds: one centroid per occupied cell.

use std::collections::HashMap;

use crate::geometry::{Point3, PointCloud};

/// Integer cell coordinates of a point on a grid of the given leaf size.
pub fn voxel_key(p: &Point3, leaf: f64) -> (i64, i64, i64) {
    (
        (p.x / leaf).floor() as i64,
        (p.y / leaf).floor() as i64,
        (p.z / leaf).floor() as i64,
    )
}

/// Replace every occupied voxel by the centroid of its points. A leaf of
/// zero (or anything non-positive) disables the filter and returns the
/// input unchanged. Output order is sorted by voxel key, so the result is
/// identical from run to run regardless of input order hash state.
pub fn voxel_downsample(cloud: &PointCloud, leaf: f64) -> PointCloud {
    if leaf <= 0.0 {
        return cloud.clone();
    }
    let mut cells: HashMap<(i64, i64, i64), (f64, f64, f64, u32)> = HashMap::new();
    for p in cloud.iter() {
        let e = cells.entry(voxel_key(p, leaf)).or_insert((0.0, 0.0, 0.0, 0));
        e.0 += p.x;
        e.1 += p.y;
        e.2 += p.z;
        e.3 += 1;
    }
    let mut keys: Vec<_> = cells.keys().copied().collect();
    keys.sort_unstable();
    PointCloud::from_points(
        keys.into_iter()
            .map(|k| {
                let (sx, sy, sz, n) = cells[&k];
                let n = n as f64;
                Point3::new(sx / n, sy / n, sz / n)
            })
            .collect(),
    )
}
