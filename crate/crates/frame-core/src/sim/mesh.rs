//! Triangle soup with a bounding-volume hierarchy for ray casting. The
//! simulated range sensor shoots rays against this structure, so queries
//! must return the nearest hit exactly (no approximate culling).

use nalgebra::Vector3;

use crate::geometry::Point3;

/// Tolerance pushed outward on barycentric edge tests so rays passing
/// exactly along a shared edge register on at least one of the two
/// triangles instead of slipping between them.
const EDGE_SLACK: f64 = 1e-9;
/// Rays closer than this to parallel with a triangle's plane miss it.
const DET_EPS: f64 = 1e-12;
/// Hits closer than this to the origin are ignored (the sensor never sits
/// exactly on a wall; this guards against self-intersection at t = 0).
const MIN_HIT_T: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub a: Point3,
    pub b: Point3,
    pub c: Point3,
}

impl Triangle {
    pub fn new(a: Point3, b: Point3, c: Point3) -> Self {
        Triangle { a, b, c }
    }

    fn centroid(&self) -> Vector3<f64> {
        (self.a.vector() + self.b.vector() + self.c.vector()) / 3.0
    }

    /// Möller-Trumbore intersection. Returns the ray parameter t of the hit
    /// with `origin + t * dir`, hitting either face side.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t_max: f64) -> Option<f64> {
        let e1 = self.b.vector() - self.a.vector();
        let e2 = self.c.vector() - self.a.vector();
        let pvec = dir.cross(&e2);
        let det = e1.dot(&pvec);
        if det.abs() < DET_EPS {
            return None;
        }
        let inv_det = 1.0 / det;
        let tvec = origin - self.a.vector();
        let u = tvec.dot(&pvec) * inv_det;
        if !(-EDGE_SLACK..=1.0 + EDGE_SLACK).contains(&u) {
            return None;
        }
        let qvec = tvec.cross(&e1);
        let v = dir.dot(&qvec) * inv_det;
        if v < -EDGE_SLACK || u + v > 1.0 + EDGE_SLACK {
            return None;
        }
        let t = e2.dot(&qvec) * inv_det;
        if t > MIN_HIT_T && t <= t_max {
            Some(t)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vector3<f64>,
    max: Vector3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            min: Vector3::repeat(f64::INFINITY),
            max: Vector3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow_point(&mut self, p: &Point3) {
        let v = p.vector();
        self.min = self.min.inf(&v);
        self.max = self.max.sup(&v);
    }

    fn grow_triangle(&mut self, t: &Triangle) {
        self.grow_point(&t.a);
        self.grow_point(&t.b);
        self.grow_point(&t.c);
    }

    /// Slab test: does the ray touch this box within [0, t_max]?
    fn hit_by(&self, origin: &Vector3<f64>, inv_dir: &Vector3<f64>, t_max: f64) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for axis in 0..3 {
            if inv_dir[axis].is_infinite() {
                // The ray runs parallel to this slab (zero direction
                // component): it touches the box iff the origin lies within
                // the slab, boundary included; the axis bounds nothing.
                if origin[axis] < self.min[axis] || origin[axis] > self.max[axis] {
                    return false;
                }
                continue;
            }
            let ta = (self.min[axis] - origin[axis]) * inv_dir[axis];
            let tb = (self.max[axis] - origin[axis]) * inv_dir[axis];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

/// A mutable triangle soup. Build order is part of the mesh identity:
/// identical build sequences produce identical meshes.
#[derive(Debug, Clone, Default)]
pub struct TriMesh {
    pub triangles: Vec<Triangle>,
}

impl TriMesh {
    pub fn new() -> Self {
        TriMesh::default()
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn push(&mut self, t: Triangle) {
        self.triangles.push(t);
    }

    /// Add a quad as two triangles, split along the a-c diagonal. Vertices
    /// must wind consistently (a, b, c, d around the perimeter).
    pub fn push_quad(&mut self, a: Point3, b: Point3, c: Point3, d: Point3) {
        self.push(Triangle::new(a, b, c));
        self.push(Triangle::new(a, c, d));
    }

    pub fn extend(&mut self, other: &TriMesh) {
        self.triangles.extend_from_slice(&other.triangles);
    }
}

const BVH_LEAF_SIZE: usize = 8;
const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct BvhNode {
    aabb: Aabb,
    /// Leaf: range [start, start+count) into `order`. Inner: children.
    left: u32,
    right: u32,
    start: u32,
    count: u32,
}

/// Static bounding-volume hierarchy over a mesh. The mesh it was built for
/// must be passed back unchanged to the query methods.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<u32>,
}

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Self {
        let mut order: Vec<u32> = (0..mesh.len() as u32).collect();
        let mut nodes = Vec::new();
        if !mesh.is_empty() {
            let n = mesh.len();
            Self::build_range(mesh, &mut order, 0, n, &mut nodes);
        }
        Bvh { nodes, order }
    }

    fn build_range(
        mesh: &TriMesh,
        order: &mut [u32],
        start: usize,
        end: usize,
        nodes: &mut Vec<BvhNode>,
    ) -> u32 {
        let mut aabb = Aabb::empty();
        for &i in &order[start..end] {
            aabb.grow_triangle(&mesh.triangles[i as usize]);
        }
        let id = nodes.len() as u32;
        nodes.push(BvhNode {
            aabb,
            left: NO_CHILD,
            right: NO_CHILD,
            start: start as u32,
            count: (end - start) as u32,
        });
        if end - start <= BVH_LEAF_SIZE {
            return id;
        }
        // Split at the median centroid along the widest axis.
        let mut cmin = Vector3::repeat(f64::INFINITY);
        let mut cmax = Vector3::repeat(f64::NEG_INFINITY);
        for &i in &order[start..end] {
            let c = mesh.triangles[i as usize].centroid();
            cmin = cmin.inf(&c);
            cmax = cmax.sup(&c);
        }
        let extent = cmax - cmin;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        if extent[axis] <= 0.0 {
            // All centroids coincide; keep as an oversized leaf.
            return id;
        }
        let mid = (start + end) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&x, &y| {
            let cx = mesh.triangles[x as usize].centroid()[axis];
            let cy = mesh.triangles[y as usize].centroid()[axis];
            cx.partial_cmp(&cy).unwrap().then_with(|| x.cmp(&y))
        });
        let left = Self::build_range(mesh, order, start, mid, nodes);
        let right = Self::build_range(mesh, order, mid, end, nodes);
        nodes[id as usize].left = left;
        nodes[id as usize].right = right;
        nodes[id as usize].count = 0;
        id
    }

    /// Nearest hit along `origin + t * dir` with t in (0, t_max].
    /// `dir` need not be unit length; t is in units of `dir`.
    pub fn cast(
        &self,
        mesh: &TriMesh,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        t_max: f64,
    ) -> Option<f64> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_dir = Vector3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best = t_max;
        let mut found = false;
        let mut stack = [0u32; 64];
        let mut top = 0usize;
        stack[top] = 0;
        top += 1;
        while top > 0 {
            top -= 1;
            let node = &self.nodes[stack[top] as usize];
            if !node.aabb.hit_by(origin, &inv_dir, best) {
                continue;
            }
            if node.left == NO_CHILD {
                for &i in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    if let Some(t) = mesh.triangles[i as usize].intersect(origin, dir, best) {
                        best = t;
                        found = true;
                    }
                }
            } else {
                stack[top] = node.left;
                top += 1;
                stack[top] = node.right;
                top += 1;
            }
        }
        if found {
            Some(best)
        } else {
            None
        }
    }
}
