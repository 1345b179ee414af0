//! Sphere-constrained fine alignment: plane-to-plane generalized ICP run on
//! spherical submaps cut out of each map around the matched keyframes.
//!
//! Each point carries a covariance built from its local neighborhood with
//! eigenvalues flattened to (1, 1, epsilon): surfaces act as planes that
//! slide freely along themselves but resist motion across their normal.
//! Gauss-Newton steps on a 6-dof perturbation minimize the sum of Mahalanobis
//! residuals; a step-halving line search keeps the per-iteration cost from
//! increasing.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::error::{FrameError, Result};
use crate::geometry::{rotation_exp, skew, Point3, PointCloud, TransformSE3};
use crate::kdtree::KdTree;
use crate::voxel::voxel_downsample;

/// Tuning knobs for covariance estimation and the optimizer.
#[derive(Debug, Clone, Copy)]
pub struct RegistrationParams {
    /// Correspondences farther than this are discarded, meters.
    pub max_correspondence_distance: f64,
    /// Leaf size for pre-registration downsampling, meters. 0 disables.
    pub voxel_leaf: f64,
    /// Neighborhood size for covariance estimation.
    pub neighbors: usize,
    /// Plane thickness: the smallest eigenvalue after regularization.
    pub covariance_epsilon: f64,
    pub max_iterations: usize,
    /// Stop once an accepted step moves less than this, meters.
    pub translation_epsilon: f64,
    /// Stop once an accepted step rotates less than this, radians.
    pub rotation_epsilon: f64,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        RegistrationParams {
            max_correspondence_distance: 1.0,
            voxel_leaf: 0.25,
            neighbors: 20,
            covariance_epsilon: 1e-3,
            max_iterations: 64,
            translation_epsilon: 1e-4,
            rotation_epsilon: 1e-4,
        }
    }
}

/// A submap region: everything within `radius` of `center`.
#[derive(Debug, Clone, Copy)]
pub struct SphereRegion {
    pub center: Point3,
    pub radius: f64,
}

/// Cut the spherical submap out of a map. Boundary points (distance exactly
/// equal to the radius) are kept.
pub fn sample_sphere(map: &PointCloud, region: &SphereRegion) -> PointCloud {
    let r2 = region.radius * region.radius;
    PointCloud::from_points(
        map.iter()
            .filter(|p| {
                let dx = p.x - region.center.x;
                let dy = p.y - region.center.y;
                let dz = p.z - region.center.z;
                dx * dx + dy * dy + dz * dz <= r2
            })
            .copied()
            .collect(),
    )
}

/// A point cloud with per-point plane covariances. Points whose neighborhood
/// was too degenerate to orient (rank < 2) are flagged unusable and take no
/// part in registration.
#[derive(Debug, Clone)]
pub struct CovariantCloud {
    pub points: Vec<Point3>,
    pub covariances: Vec<Matrix3<f64>>,
    pub usable: Vec<bool>,
}

impl CovariantCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn usable_count(&self) -> usize {
        self.usable.iter().filter(|&&u| u).count()
    }
}

/// Estimate a regularized covariance for every point from its `k` nearest
/// other points. Eigenvalues are replaced by (1, 1, epsilon) in descending
/// order; neighborhoods with no second spread direction within 1e-9 are
/// flagged degenerate instead.
pub fn estimate_covariances(
    cloud: &PointCloud,
    k: usize,
    epsilon: f64,
) -> Result<CovariantCloud> {
    assert!(k >= 3, "covariance estimation needs at least 3 neighbors");
    if cloud.len() < k + 1 {
        return Err(FrameError::CloudTooSmall {
            len: cloud.len(),
            need: k + 1,
        });
    }
    let raw: Vec<[f64; 3]> = cloud.iter().map(|p| [p.x, p.y, p.z]).collect();
    let tree = KdTree::build(&raw);

    let mut covariances = Vec::with_capacity(cloud.len());
    let mut usable = Vec::with_capacity(cloud.len());
    for (i, p) in raw.iter().enumerate() {
        // Query one extra so the point itself can be dropped.
        let neighbors: Vec<usize> = tree
            .k_nearest(p, k + 1)
            .into_iter()
            .filter(|&(j, _)| j != i)
            .take(k)
            .map(|(j, _)| j)
            .collect();

        let mut mean = Vector3::zeros();
        for &j in &neighbors {
            mean += Vector3::new(raw[j][0], raw[j][1], raw[j][2]);
        }
        mean /= neighbors.len() as f64;
        let mut cov = Matrix3::zeros();
        for &j in &neighbors {
            let d = Vector3::new(raw[j][0], raw[j][1], raw[j][2]) - mean;
            cov += d * d.transpose();
        }
        cov /= neighbors.len() as f64;

        let eig = cov.symmetric_eigen();
        // Sort eigenpairs descending by eigenvalue.
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let second = eig.eigenvalues[order[1]];
        if second <= 1e-9 {
            covariances.push(Matrix3::identity());
            usable.push(false);
            continue;
        }
        let scaled = [1.0, 1.0, epsilon];
        let mut rebuilt = Matrix3::zeros();
        for (rank, &oi) in order.iter().enumerate() {
            let v = eig.eigenvectors.column(oi);
            rebuilt += scaled[rank] * v * v.transpose();
        }
        covariances.push(rebuilt);
        usable.push(true);
    }
    Ok(CovariantCloud {
        points: cloud.points.clone(),
        covariances,
        usable,
    })
}

/// Downsample then attach covariances: the standard preparation applied to
/// each submap before registration.
pub fn prepare_cloud(
    cloud: &PointCloud,
    params: &RegistrationParams,
) -> Result<CovariantCloud> {
    let reduced = voxel_downsample(cloud, params.voxel_leaf);
    estimate_covariances(&reduced, params.neighbors, params.covariance_epsilon)
}

/// Outcome of a registration run.
#[derive(Debug, Clone)]
pub struct RegistrationResult {
    /// Maps source-cloud coordinates into the target frame, refined from
    /// the initial guess.
    pub transform: TransformSE3,
    pub iterations: usize,
    pub converged: bool,
    /// Sum of Mahalanobis residuals at the returned transform.
    pub final_cost: f64,
    /// Gated correspondences at the returned transform.
    pub correspondence_count: usize,
    /// (cost before, cost after) for every accepted step, evaluated under
    /// that iteration's frozen correspondences and weights.
    pub step_costs: Vec<(f64, f64)>,
}

struct Correspondence {
    source: usize,
    target: usize,
    /// Inverse of the combined covariance, frozen for one iteration.
    weight: Matrix3<f64>,
}

fn find_pairs(
    source: &CovariantCloud,
    transform: &TransformSE3,
    target_tree: &KdTree<3>,
    target_ids: &[usize],
    max_dist: f64,
) -> Vec<(usize, usize)> {
    let max_sq = max_dist * max_dist;
    let mut pairs = Vec::new();
    for (i, p) in source.points.iter().enumerate() {
        if !source.usable[i] {
            continue;
        }
        let q = transform.apply(p);
        if let Some((t_idx, _)) = target_tree.nearest_within_sq(&[q.x, q.y, q.z], max_sq) {
            pairs.push((i, target_ids[t_idx]));
        }
    }
    pairs
}

fn weighted_cost(
    source: &CovariantCloud,
    target: &CovariantCloud,
    corr: &[Correspondence],
    transform: &TransformSE3,
) -> f64 {
    let mut cost = 0.0;
    for c in corr {
        let moved = transform.apply(&source.points[c.source]).vector();
        let d = target.points[c.target].vector() - moved;
        cost += (d.transpose() * c.weight * d)[(0, 0)];
    }
    cost
}

/// Refine `initial` so that `source` aligns onto `target`.
///
/// Fails with `CaptureRange` when the initial guess admits no gated
/// correspondence at all. Stops on convergence (both components of an
/// accepted step under their epsilons), on `max_iterations`, or after five
/// consecutive iterations without cost improvement (returning the best
/// estimate seen, flagged unconverged).
pub fn gicp_register(
    source: &CovariantCloud,
    target: &CovariantCloud,
    initial: &TransformSE3,
    params: &RegistrationParams,
) -> Result<RegistrationResult> {
    if source.usable_count() == 0 || target.usable_count() == 0 {
        return Err(FrameError::EmptyCloud);
    }
    let target_ids: Vec<usize> = (0..target.len()).filter(|&i| target.usable[i]).collect();
    let target_pts: Vec<[f64; 3]> = target_ids
        .iter()
        .map(|&i| {
            let p = target.points[i];
            [p.x, p.y, p.z]
        })
        .collect();
    let target_tree = KdTree::build(&target_pts);

    let mut t = *initial;
    let mut best_t = t;
    let mut best_cost = f64::INFINITY;
    let mut stall = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;
    let mut step_costs = Vec::new();

    for iter in 0..params.max_iterations {
        iterations = iter + 1;
        let pairs = find_pairs(
            source,
            &t,
            &target_tree,
            &target_ids,
            params.max_correspondence_distance,
        );
        if pairs.is_empty() {
            if iter == 0 {
                return Err(FrameError::CaptureRange);
            }
            converged = false;
            break;
        }

        // Freeze combined weights for this iteration.
        let r = *t.rotation();
        let corr: Vec<Correspondence> = pairs
            .iter()
            .filter_map(|&(si, ti)| {
                let combined =
                    target.covariances[ti] + r * source.covariances[si] * r.transpose();
                combined.try_inverse().map(|weight| Correspondence {
                    source: si,
                    target: ti,
                    weight,
                })
            })
            .collect();
        if corr.is_empty() {
            converged = false;
            break;
        }

        let cost_before = weighted_cost(source, target, &corr, &t);

        // Gauss-Newton normal equations over [dt, dw], linearizing
        // e(d) = e0 + J d with J = [-I | R * skew(p)].
        let mut h_tt = Matrix3::<f64>::zeros();
        let mut h_tw = Matrix3::<f64>::zeros();
        let mut h_ww = Matrix3::<f64>::zeros();
        let mut g_t = Vector3::<f64>::zeros();
        let mut g_w = Vector3::<f64>::zeros();
        for c in &corr {
            let p = source.points[c.source].vector();
            let moved = t.apply_vector(&p);
            let residual = target.points[c.target].vector() - moved;
            let jw = r * skew(&p);
            let m = c.weight;
            let mjw = m * jw;
            h_tt += m;
            h_tw -= mjw;
            h_ww += jw.transpose() * mjw;
            g_t -= m * residual;
            g_w += jw.transpose() * (m * residual);
        }
        let mut h = Matrix6::<f64>::zeros();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&h_tt);
        h.fixed_view_mut::<3, 3>(0, 3).copy_from(&h_tw);
        h.fixed_view_mut::<3, 3>(3, 0).copy_from(&h_tw.transpose());
        h.fixed_view_mut::<3, 3>(3, 3).copy_from(&h_ww);
        let mut g = Vector6::<f64>::zeros();
        g.fixed_view_mut::<3, 1>(0, 0).copy_from(&g_t);
        g.fixed_view_mut::<3, 1>(3, 0).copy_from(&g_w);

        let delta = match h.cholesky() {
            Some(ch) => -(ch.solve(&g)),
            None => {
                converged = false;
                break;
            }
        };
        let dt = Vector3::new(delta[0], delta[1], delta[2]);
        let dw = Vector3::new(delta[3], delta[4], delta[5]);

        // Sub-epsilon proposal: already where Gauss-Newton wants us.
        if dt.norm() < params.translation_epsilon && dw.norm() < params.rotation_epsilon {
            converged = true;
            if cost_before < best_cost {
                best_cost = cost_before;
                best_t = t;
            }
            break;
        }

        // Step-halving line search under the frozen weights.
        let mut scale = 1.0f64;
        let mut accepted = None;
        for _ in 0..=8 {
            let cand = TransformSE3::from_parts_snapped(
                r * rotation_exp(&(dw * scale)),
                t.translation() + dt * scale,
            );
            let cost_after = weighted_cost(source, target, &corr, &cand);
            if cost_after <= cost_before {
                accepted = Some((cand, cost_after, scale));
                break;
            }
            scale /= 2.0;
        }
        let (next, cost_after, scale) = match accepted {
            Some(a) => a,
            None => {
                // The line search could not find a non-increasing step.
                converged = false;
                break;
            }
        };

        t = next;
        step_costs.push((cost_before, cost_after));

        if cost_after < best_cost {
            best_cost = cost_after;
            best_t = t;
            stall = 0;
        } else {
            stall += 1;
            if stall >= 5 {
                converged = false;
                break;
            }
        }

        if (dt * scale).norm() < params.translation_epsilon
            && (dw * scale).norm() < params.rotation_epsilon
        {
            converged = true;
            break;
        }
    }

    let final_t = if best_cost.is_finite() { best_t } else { t };
    // Score the returned estimate: fresh correspondences and weights.
    let pairs = find_pairs(
        source,
        &final_t,
        &target_tree,
        &target_ids,
        params.max_correspondence_distance,
    );
    let r = *final_t.rotation();
    let corr: Vec<Correspondence> = pairs
        .iter()
        .filter_map(|&(si, ti)| {
            let combined = target.covariances[ti] + r * source.covariances[si] * r.transpose();
            combined.try_inverse().map(|weight| Correspondence {
                source: si,
                target: ti,
                weight,
            })
        })
        .collect();
    let final_cost = weighted_cost(source, target, &corr, &final_t);

    Ok(RegistrationResult {
        transform: final_t,
        iterations,
        converged,
        final_cost,
        correspondence_count: corr.len(),
        step_costs,
    })
}
