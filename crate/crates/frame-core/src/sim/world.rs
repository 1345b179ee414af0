//! Procedural tunnel worlds and a spinning-LiDAR model. A world is a graph
//! of box-section corridors joined by junction chambers, tessellated into
//! rough-walled triangle panels; scans are exact ray casts against that
//! geometry, perturbed with seeded per-ray range noise, accumulated into
//! ground-truthed robot runs.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::{extract_descriptors, record_projection, DescriptorRecord, RINGS};
use crate::error::{FrameError, Result};
use crate::geometry::{wrap_angle, Point3, PointCloud, Trajectory, TrajectoryPose, TransformSE3};
use crate::pipeline::RobotRun;
use crate::projection::spherical_project;
use crate::sim::mesh::{Bvh, TriMesh};

/// Target edge length of a wall cell, meters.
const CELL_SIZE: f64 = 0.5;
/// Containment slack: cells this close to another primitive's boundary
/// count as inside for the dominant primitive and outside for the other,
/// so coincident faces are emitted exactly once.
const CONTAIN_EPS: f64 = 1e-6;
/// Junction chambers extend this factor times the widest incident corridor
/// width on each side of the node, enough to swallow corridor mouths
/// arriving at any horizontal angle.
const JUNCTION_EXTENT_FACTOR: f64 = 0.75;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive combination of a running hash with one more value. Used
/// throughout the simulator to derive independent seeds from one master.
pub fn mix(h: u64, v: u64) -> u64 {
    splitmix64(h ^ splitmix64(v))
}

/// Uniform in [0, 1) from a hash.
fn hash01(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn mix_f64(h: u64, v: f64) -> u64 {
    mix(h, v.to_bits())
}

/// A corridor segment between two graph nodes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorridorEdge {
    /// Index of the start node.
    pub a: usize,
    /// Index of the end node.
    pub b: usize,
    /// Cross-section width, meters.
    pub width: f64,
    /// Cross-section height, meters.
    pub height: f64,
}

/// Declarative description of a tunnel world: nodes are corridor-floor
/// center positions, edges are box-section corridors between them. The same
/// spec and seed always generate the same geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldSpec {
    pub nodes: Vec<Point3>,
    pub edges: Vec<CorridorEdge>,
    /// Peak wall displacement applied to panel-interior vertices, meters.
    pub roughness_amplitude: f64,
    pub seed: u64,
}

impl WorldSpec {
    /// Deterministic identity of the generated world: any change to the
    /// graph, the roughness, or the seed changes it.
    pub fn fingerprint(&self) -> u64 {
        let mut h = mix(0x46524d45, self.seed);
        h = mix_f64(h, self.roughness_amplitude);
        for n in &self.nodes {
            h = mix_f64(h, n.x);
            h = mix_f64(h, n.y);
            h = mix_f64(h, n.z);
        }
        for e in &self.edges {
            h = mix(h, e.a as u64);
            h = mix(h, e.b as u64);
            h = mix_f64(h, e.width);
            h = mix_f64(h, e.height);
        }
        h
    }
}

/// An oriented box volume: corridors and junction chambers alike.
#[derive(Debug, Clone, Copy)]
struct OrientedBox {
    center: Vector3<f64>,
    axes: [Vector3<f64>; 3],
    half: [f64; 3],
}

impl OrientedBox {
    /// Containment with a signed margin: positive expands the box (closed,
    /// boundary included), negative shrinks it (strict interior only).
    fn contains(&self, p: &Vector3<f64>, margin: f64) -> bool {
        let d = p - self.center;
        (0..3).all(|i| d.dot(&self.axes[i]).abs() <= self.half[i] + margin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PrimitiveKind {
    Corridor,
    Junction,
}

#[derive(Debug, Clone, Copy)]
struct Primitive {
    bbox: OrientedBox,
    kind: PrimitiveKind,
}

/// Generated world geometry plus the volume model it was built from.
#[derive(Debug, Clone)]
pub struct World {
    mesh: TriMesh,
    bvh: Bvh,
    primitives: Vec<Primitive>,
    fingerprint: u64,
}

impl World {
    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Nearest surface hit along a ray, or None within `t_max`.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t_max: f64) -> Option<f64> {
        self.bvh.cast(&self.mesh, origin, dir, t_max)
    }

    /// Is the point strictly inside the free space (any corridor or
    /// junction volume)?
    pub fn contains(&self, p: &Point3) -> bool {
        let v = p.vector();
        self.primitives
            .iter()
            .any(|prim| prim.bbox.contains(&v, -CONTAIN_EPS))
    }
}

/// Build the triangle surface of a world. Fails on disconnected graphs,
/// degenerate corridors (non-positive dimensions, near-vertical axis, or
/// too short to clear the junction chambers at its ends), and edges that
/// reference missing nodes.
pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    validate_graph(spec)?;
    let primitives = build_primitives(spec)?;
    let mesh = tessellate(spec, &primitives);
    let bvh = Bvh::build(&mesh);
    Ok(World {
        mesh,
        bvh,
        primitives,
        fingerprint: spec.fingerprint(),
    })
}

fn validate_graph(spec: &WorldSpec) -> Result<()> {
    if spec.nodes.is_empty() || spec.edges.is_empty() {
        return Err(FrameError::DisconnectedWorld);
    }
    for (i, e) in spec.edges.iter().enumerate() {
        if e.a >= spec.nodes.len() || e.b >= spec.nodes.len() || e.a == e.b {
            return Err(FrameError::InvalidCorridor { index: i });
        }
        if !(e.width > 0.0) || !(e.height > 0.0) {
            return Err(FrameError::InvalidCorridor { index: i });
        }
        let axis = spec.nodes[e.b].vector() - spec.nodes[e.a].vector();
        let len = axis.norm();
        if len <= 1e-6 || (axis.z / len).abs() > 0.95 {
            return Err(FrameError::InvalidCorridor { index: i });
        }
    }
    // Every node must be reachable through corridors.
    let mut seen = vec![false; spec.nodes.len()];
    let mut queue = vec![0usize];
    seen[0] = true;
    while let Some(n) = queue.pop() {
        for e in &spec.edges {
            for (x, y) in [(e.a, e.b), (e.b, e.a)] {
                if x == n && !seen[y] {
                    seen[y] = true;
                    queue.push(y);
                }
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(FrameError::DisconnectedWorld);
    }
    Ok(())
}

/// Junction chamber dimensions per node: (half-extent, height), only for
/// nodes where two or more corridors meet.
fn junction_dims(spec: &WorldSpec) -> Vec<Option<(f64, f64)>> {
    let mut degree = vec![0usize; spec.nodes.len()];
    let mut max_w = vec![0.0f64; spec.nodes.len()];
    let mut max_h = vec![0.0f64; spec.nodes.len()];
    for e in &spec.edges {
        for n in [e.a, e.b] {
            degree[n] += 1;
            max_w[n] = max_w[n].max(e.width);
            max_h[n] = max_h[n].max(e.height);
        }
    }
    (0..spec.nodes.len())
        .map(|n| {
            if degree[n] >= 2 {
                Some((JUNCTION_EXTENT_FACTOR * max_w[n], max_h[n]))
            } else {
                None
            }
        })
        .collect()
}

fn build_primitives(spec: &WorldSpec) -> Result<Vec<Primitive>> {
    let junctions = junction_dims(spec);
    let mut primitives = Vec::new();
    for (i, e) in spec.edges.iter().enumerate() {
        let a = spec.nodes[e.a].vector();
        let b = spec.nodes[e.b].vector();
        let axis = b - a;
        let len = axis.norm();
        let u = axis / len;
        let v = Vector3::z().cross(&u).normalize();
        let w = u.cross(&v);
        // The corridor must reach past the chambers at its ends, or the
        // chamber culling would consume it whole.
        let clearance: f64 = [e.a, e.b]
            .iter()
            .map(|&n| junctions[n].map(|(ext, _)| ext).unwrap_or(0.0))
            .sum();
        if len <= clearance + 0.25 {
            return Err(FrameError::InvalidCorridor { index: i });
        }
        primitives.push(Primitive {
            bbox: OrientedBox {
                center: (a + b) / 2.0 + w * (e.height / 2.0),
                axes: [u, v, w],
                half: [len / 2.0, e.width / 2.0, e.height / 2.0],
            },
            kind: PrimitiveKind::Corridor,
        });
    }
    for (n, dims) in junctions.iter().enumerate() {
        if let Some((ext, height)) = dims {
            primitives.push(Primitive {
                bbox: OrientedBox {
                    center: spec.nodes[n].vector() + Vector3::z() * (height / 2.0),
                    axes: [Vector3::x(), Vector3::y(), Vector3::z()],
                    half: [*ext, *ext, height / 2.0],
                },
                kind: PrimitiveKind::Junction,
            });
        }
    }
    Ok(primitives)
}

/// Should a surface cell of primitive `own` at `centroid` be dropped
/// because it lies inside some other volume?
///
/// Corridor cells yield to junction chambers even on exactly coincident
/// planes (floor against floor), so shared surfaces are emitted once, by
/// the chamber. Everything else yields only when strictly inside.
fn culled(centroid: &Vector3<f64>, own: usize, primitives: &[Primitive]) -> bool {
    let own_kind = primitives[own].kind;
    primitives.iter().enumerate().any(|(i, other)| {
        if i == own {
            return false;
        }
        let margin = if own_kind == PrimitiveKind::Corridor && other.kind == PrimitiveKind::Junction
        {
            CONTAIN_EPS
        } else {
            -CONTAIN_EPS
        };
        other.bbox.contains(centroid, margin)
    })
}

fn tessellate(spec: &WorldSpec, primitives: &[Primitive]) -> TriMesh {
    let mut mesh = TriMesh::new();
    for (pi, prim) in primitives.iter().enumerate() {
        let bx = &prim.bbox;
        for axis in 0..3 {
            for sign in [-1.0, 1.0] {
                let normal = bx.axes[axis] * sign;
                let eu = bx.axes[(axis + 1) % 3];
                let ev = bx.axes[(axis + 2) % 3];
                let len_u = 2.0 * bx.half[(axis + 1) % 3];
                let len_v = 2.0 * bx.half[(axis + 2) % 3];
                let origin =
                    bx.center + normal * bx.half[axis] - eu * (len_u / 2.0) - ev * (len_v / 2.0);
                emit_panel(
                    &mut mesh,
                    spec,
                    primitives,
                    pi,
                    &origin,
                    &eu,
                    &ev,
                    &normal,
                    len_u,
                    len_v,
                );
            }
        }
    }
    mesh
}

#[allow(clippy::too_many_arguments)]
fn emit_panel(
    mesh: &mut TriMesh,
    spec: &WorldSpec,
    primitives: &[Primitive],
    own: usize,
    origin: &Vector3<f64>,
    eu: &Vector3<f64>,
    ev: &Vector3<f64>,
    normal: &Vector3<f64>,
    len_u: f64,
    len_v: f64,
) {
    let nu = (len_u / CELL_SIZE).ceil().max(1.0) as usize;
    let nv = (len_v / CELL_SIZE).ceil().max(1.0) as usize;
    let du = len_u / nu as f64;
    let dv = len_v / nv as f64;
    let vertex = |iu: usize, iv: usize| -> Vector3<f64> {
        let flat = origin + eu * (iu as f64 * du) + ev * (iv as f64 * dv);
        // Border vertices stay put so adjoining panels seal exactly along
        // their shared edges; interior vertices are displaced by a hash of
        // their position, identical for the cells that share them.
        if iu == 0 || iu == nu || iv == 0 || iv == nv || spec.roughness_amplitude == 0.0 {
            return flat;
        }
        let mut h = mix(spec.seed, 0x726f7567);
        h = mix(h, quantize(flat.x));
        h = mix(h, quantize(flat.y));
        h = mix(h, quantize(flat.z));
        flat + normal * (spec.roughness_amplitude * (2.0 * hash01(h) - 1.0))
    };
    for iu in 0..nu {
        for iv in 0..nv {
            let centroid = origin + eu * ((iu as f64 + 0.5) * du) + ev * ((iv as f64 + 0.5) * dv);
            if culled(&centroid, own, primitives) {
                continue;
            }
            let p00 = Point3::from_vector(vertex(iu, iv));
            let p10 = Point3::from_vector(vertex(iu + 1, iv));
            let p11 = Point3::from_vector(vertex(iu + 1, iv + 1));
            let p01 = Point3::from_vector(vertex(iu, iv + 1));
            mesh.push_quad(p00, p10, p11, p01);
        }
    }
}

/// Positions are hashed at 0.1 mm resolution so the same geometric vertex
/// reached through different arithmetic paths displaces identically.
fn quantize(x: f64) -> u64 {
    (x * 1e4).round() as i64 as u64
}

/// Spinning range sensor model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Elevation channels; the descriptor stack expects 16.
    pub channels: usize,
    /// Full vertical field of view, degrees, centered on the horizon.
    pub vertical_fov_deg: f64,
    /// Horizontal angle between consecutive firings, degrees.
    pub azimuth_step_deg: f64,
    /// Returns beyond this range are dropped, meters.
    pub max_range: f64,
    /// Standard deviation of per-ray range noise, meters.
    pub noise_sigma: f64,
    /// Noise stream identity; scans are reproducible from it.
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            channels: 16,
            vertical_fov_deg: 30.0,
            azimuth_step_deg: 0.7,
            max_range: 50.0,
            noise_sigma: 0.02,
            seed: 0,
        }
    }
}

/// One simulated excursion: the robot run as the pipeline sees it, plus the
/// ground truth the simulator knows.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub run: RobotRun,
    /// World-frame sensor pose at each trajectory step.
    pub true_poses: Vec<TransformSE3>,
    /// Maps world coordinates into the run's local map frame.
    pub frame_offset: TransformSE3,
    /// Sensor-frame scan at each trajectory step.
    pub scans: Vec<PointCloud>,
    /// Identity of the world the run was simulated in.
    pub world_fingerprint: u64,
}

/// Drive a sensor along the waypoint polyline at 1 m spacing, casting one
/// full scan per step. The run's map, trajectory, and descriptor records
/// are expressed in the local frame given by `local_frame` (world → local);
/// scans stay in the sensor frame.
pub fn simulate_run(
    world: &World,
    waypoints: &[Point3],
    config: &ScanConfig,
    local_frame: &TransformSE3,
) -> Result<SimRun> {
    assert_eq!(
        config.channels, RINGS,
        "the descriptor stack is built for {RINGS} elevation channels"
    );
    assert!(waypoints.len() >= 2, "a run needs at least two waypoints");
    for (i, wp) in waypoints.iter().enumerate() {
        if !world.contains(wp) {
            return Err(FrameError::WaypointOutsideWorld { index: i });
        }
    }
    let poses = interpolate(waypoints);
    for (p, _, src) in &poses {
        if !world.contains(p) {
            return Err(FrameError::WaypointOutsideWorld { index: *src });
        }
    }

    // Records live on the shared grid, not the sensor's own aperture, so
    // runs from heterogeneous sensors stay comparable.
    let projection = record_projection(config.max_range);
    let n_az = (360.0 / config.azimuth_step_deg).floor() as usize;

    struct StepOutput {
        scan: PointCloud,
        placed: PointCloud,
        record: DescriptorRecord,
        pose_local: TrajectoryPose,
        pose_world: TransformSE3,
    }

    let steps: Vec<StepOutput> = poses
        .par_iter()
        .enumerate()
        .map(|(k, &(position, yaw, _))| {
            let pose_world = TransformSE3::from_yaw_translation(yaw, position.vector());
            let mut scan = PointCloud::new();
            let origin = position.vector();
            for ch in 0..config.channels {
                let el = (config.vertical_fov_deg / 2.0
                    - (ch as f64 + 0.5) * config.vertical_fov_deg / config.channels as f64)
                    .to_radians();
                let (sin_el, cos_el) = el.sin_cos();
                for j in 0..n_az {
                    // Center-phase sampling: firings sit half a step past
                    // the frame origin, never exactly on a bin boundary.
                    let az = ((j as f64 + 0.5) * config.azimuth_step_deg).to_radians();
                    let dir_sensor = Vector3::new(cos_el * az.cos(), cos_el * az.sin(), sin_el);
                    let dir_world = pose_world.rotation() * dir_sensor;
                    let Some(t) = world.cast(&origin, &dir_world, config.max_range) else {
                        continue;
                    };
                    let range = if config.noise_sigma > 0.0 {
                        let ray = (ch * n_az + j) as u64;
                        let mut rng =
                            ChaCha8Rng::seed_from_u64(mix(mix(config.seed, k as u64), ray));
                        let n: f64 = StandardNormal.sample(&mut rng);
                        t + config.noise_sigma * n
                    } else {
                        t
                    };
                    if range > 0.0 && range <= config.max_range {
                        scan.push(Point3::from_vector(dir_sensor * range));
                    }
                }
            }
            let image = spherical_project(&scan, &projection)
                .expect("simulated ranges are finite by construction");
            let (query, orient) =
                extract_descriptors(&image).expect("projection grid matches descriptor layout");
            let placed_pose = local_frame.compose(&pose_world);
            let placed = scan.transformed(&placed_pose);
            let local_position = local_frame.apply(&position);
            StepOutput {
                scan,
                placed,
                record: DescriptorRecord {
                    query,
                    orient,
                    position: local_position,
                    timestep: k as u32,
                },
                pose_local: TrajectoryPose {
                    timestep: k as u32,
                    position: local_position,
                    yaw: wrap_angle(yaw + local_frame.yaw()),
                },
                pose_world,
            }
        })
        .collect();

    let mut map = PointCloud::new();
    let mut records = Vec::with_capacity(steps.len());
    let mut traj = Vec::with_capacity(steps.len());
    let mut true_poses = Vec::with_capacity(steps.len());
    let mut scans = Vec::with_capacity(steps.len());
    for s in steps {
        map.points.extend_from_slice(&s.placed.points);
        records.push(s.record);
        traj.push(s.pose_local);
        true_poses.push(s.pose_world);
        scans.push(s.scan);
    }
    Ok(SimRun {
        run: RobotRun {
            map,
            trajectory: Trajectory::new(traj).expect("timesteps are consecutive"),
            records,
        },
        true_poses,
        frame_offset: *local_frame,
        scans,
        world_fingerprint: world.fingerprint(),
    })
}

/// Walk the waypoint polyline emitting a pose every meter: position, yaw
/// aligned with the direction of travel, and the index of the waypoint that
/// opened the containing segment.
fn interpolate(waypoints: &[Point3]) -> Vec<(Point3, f64, usize)> {
    struct Segment {
        start: Vector3<f64>,
        dir: Vector3<f64>,
        len: f64,
        yaw: f64,
        src: usize,
    }
    let mut segments = Vec::new();
    for i in 0..waypoints.len() - 1 {
        let a = waypoints[i].vector();
        let b = waypoints[i + 1].vector();
        let d = b - a;
        let len = d.norm();
        if len <= 1e-9 {
            continue;
        }
        let dir = d / len;
        segments.push(Segment {
            start: a,
            dir,
            len,
            yaw: dir.y.atan2(dir.x),
            src: i,
        });
    }
    let total: f64 = segments.iter().map(|s| s.len).sum();
    assert!(total > 1.0, "waypoint polyline is too short to traverse");
    let mut poses = Vec::new();
    let mut seg_idx = 0usize;
    let mut seg_start = 0.0f64;
    for m in 0..=(total.floor() as usize) {
        let s = m as f64;
        // A mark exactly on a joint belongs to the outgoing segment, so the
        // pose heading turns with the corridor.
        while seg_idx + 1 < segments.len() && s >= seg_start + segments[seg_idx].len - 1e-9 {
            seg_start += segments[seg_idx].len;
            seg_idx += 1;
        }
        let seg = &segments[seg_idx];
        let along = (s - seg_start).clamp(0.0, seg.len);
        poses.push((
            Point3::from_vector(seg.start + seg.dir * along),
            seg.yaw,
            seg.src,
        ));
    }
    poses
}

/// The transform aligning run `b`'s local map into run `a`'s local frame.
/// Both runs must come from the same world.
pub fn ground_truth_transform(a: &SimRun, b: &SimRun) -> Result<TransformSE3> {
    if a.world_fingerprint != b.world_fingerprint {
        return Err(FrameError::WorldMismatch);
    }
    Ok(a.frame_offset.compose(&b.frame_offset.inverse()))
}
