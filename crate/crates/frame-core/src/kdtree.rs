//! Exact nearest-neighbor search over fixed-dimension points.
//!
//! One implementation serves both the 3-d neighborhoods used by registration
//! and the 64-d descriptor index. Queries are exact: no approximation, no
//! pruning shortcuts that could skip an equally-near point. Distance ties are
//! broken toward the smallest point index so results are reproducible and
//! match a naive linear scan.

const LEAF_SIZE: usize = 24;
const NO_NODE: u32 = u32::MAX;

struct Node {
    /// Split axis, or `NO_NODE` for leaves.
    axis: u32,
    split: f64,
    left: u32,
    right: u32,
    /// Leaf payload range into `perm`.
    start: u32,
    end: u32,
}

pub struct KdTree<const D: usize> {
    points: Vec<[f64; D]>,
    perm: Vec<u32>,
    nodes: Vec<Node>,
    root: u32,
}

/// Squared Euclidean distance with early exit once `bound` is exceeded.
/// Exact: the early exit only fires when the final value could not win.
#[inline]
pub(crate) fn dist_sq_bounded<const D: usize>(a: &[f64; D], b: &[f64; D], bound: f64) -> f64 {
    let mut acc = 0.0;
    let mut i = 0;
    while i < D {
        let stop = (i + 8).min(D);
        while i < stop {
            let d = a[i] - b[i];
            acc += d * d;
            i += 1;
        }
        if acc > bound {
            return acc;
        }
    }
    acc
}

#[inline]
fn dist_sq<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    dist_sq_bounded(a, b, f64::INFINITY)
}

impl<const D: usize> KdTree<D> {
    pub fn build(points: &[[f64; D]]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            perm: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
            root: NO_NODE,
        };
        if !points.is_empty() {
            tree.root = tree.build_range(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &[f64; D] {
        &self.points[index]
    }

    fn build_range(&mut self, start: usize, end: usize) -> u32 {
        let len = end - start;
        if len <= LEAF_SIZE {
            self.nodes.push(Node {
                axis: NO_NODE,
                split: 0.0,
                left: NO_NODE,
                right: NO_NODE,
                start: start as u32,
                end: end as u32,
            });
            return (self.nodes.len() - 1) as u32;
        }

        // Split on the axis with the widest value spread in this range.
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for &i in &self.perm[start..end] {
            let p = &self.points[i as usize];
            for a in 0..D {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let mut axis = 0;
        let mut spread = -1.0;
        for a in 0..D {
            let s = hi[a] - lo[a];
            if s > spread {
                spread = s;
                axis = a;
            }
        }

        let mid = len / 2;
        let points = &self.points;
        self.perm[start..end].select_nth_unstable_by(mid, |&x, &y| {
            points[x as usize][axis]
                .partial_cmp(&points[y as usize][axis])
                .expect("non-finite coordinate in kd-tree")
        });
        let split = self.points[self.perm[start + mid] as usize][axis];

        let node_index = self.nodes.len();
        self.nodes.push(Node {
            axis: axis as u32,
            split,
            left: NO_NODE,
            right: NO_NODE,
            start: 0,
            end: 0,
        });
        let left = self.build_range(start, start + mid);
        let right = self.build_range(start + mid, end);
        self.nodes[node_index].left = left;
        self.nodes[node_index].right = right;
        node_index as u32
    }

    /// The exact nearest point: smallest squared distance, ties broken by
    /// the smallest index. Returns `(index, squared_distance)`.
    pub fn nearest(&self, query: &[f64; D]) -> Option<(usize, f64)> {
        self.nearest_within_sq(query, f64::INFINITY)
    }

    /// Exact nearest point with squared distance at most `max_sq`
    /// (inclusive). Same tie-breaking as `nearest`.
    pub fn nearest_within_sq(&self, query: &[f64; D], max_sq: f64) -> Option<(usize, f64)> {
        if self.root == NO_NODE {
            return None;
        }
        let mut best_idx = usize::MAX;
        let mut best_sq = max_sq;
        self.nearest_rec(self.root, query, &mut best_idx, &mut best_sq);
        if best_idx == usize::MAX {
            None
        } else {
            Some((best_idx, best_sq))
        }
    }

    fn nearest_rec(&self, node: u32, query: &[f64; D], best_idx: &mut usize, best_sq: &mut f64) {
        let n = &self.nodes[node as usize];
        if n.axis == NO_NODE {
            for &i in &self.perm[n.start as usize..n.end as usize] {
                let i = i as usize;
                let d = dist_sq_bounded(&self.points[i], query, *best_sq);
                if d < *best_sq || (d == *best_sq && i < *best_idx) {
                    *best_sq = d;
                    *best_idx = i;
                }
            }
            return;
        }
        let diff = query[n.axis as usize] - n.split;
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.nearest_rec(near, query, best_idx, best_sq);
        // The far side can still hold a winner when the plane distance ties
        // the current best, because a tied point with a smaller index wins.
        if diff * diff <= *best_sq {
            self.nearest_rec(far, query, best_idx, best_sq);
        }
    }

    /// The `k` exact nearest points ordered by (distance, index).
    pub fn k_nearest(&self, query: &[f64; D], k: usize) -> Vec<(usize, f64)> {
        let mut heap: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if self.root != NO_NODE && k > 0 {
            self.k_nearest_rec(self.root, query, k, &mut heap);
        }
        heap.into_iter().map(|(d, i)| (i, d)).collect()
    }

    fn k_nearest_rec(&self, node: u32, query: &[f64; D], k: usize, acc: &mut Vec<(f64, usize)>) {
        let n = &self.nodes[node as usize];
        if n.axis == NO_NODE {
            for &i in &self.perm[n.start as usize..n.end as usize] {
                let i = i as usize;
                let d = dist_sq(&self.points[i], query);
                let cand = (d, i);
                if acc.len() < k || cand < acc[acc.len() - 1] {
                    let pos = acc.partition_point(|x| *x < cand);
                    acc.insert(pos, cand);
                    if acc.len() > k {
                        acc.pop();
                    }
                }
            }
            return;
        }
        let diff = query[n.axis as usize] - n.split;
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.k_nearest_rec(near, query, k, acc);
        let bound = if acc.len() < k {
            f64::INFINITY
        } else {
            acc[acc.len() - 1].0
        };
        if diff * diff <= bound {
            self.k_nearest_rec(far, query, k, acc);
        }
    }
}
