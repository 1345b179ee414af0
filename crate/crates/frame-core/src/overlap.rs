//! Finding the keyframe pair where two maps most plausibly cover the same
//! place, and turning that pair plus a regressed yaw into an initial rigid
//! alignment guess.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::{DescriptorRecord, DESCRIPTOR_LEN};
use crate::error::{FrameError, Result};
use crate::geometry::{Point3, TransformSE3};
use crate::kdtree::{dist_sq_bounded, KdTree};

/// Incoming queries handled per parallel task in the best-pair scan.
const QUERY_CHUNK: usize = 32;
/// Indexed descriptors kept cache-hot per scan block.
const POINT_BLOCK: usize = 256;

/// Exact nearest-neighbor index over one run's place descriptors.
///
/// Records whose place descriptor is all-zero carry no signal and are left
/// out: a featureless scan must never win a match.
pub struct DescriptorIndex {
    tree: KdTree<DESCRIPTOR_LEN>,
    /// (timestep, position) per indexed point, sorted by timestep so that
    /// tree-index tie-breaking equals timestep tie-breaking.
    meta: Vec<(u32, Point3)>,
}

/// The winning keyframe pairing between an indexed run and an incoming run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OverlapMatch {
    pub own_timestep: u32,
    pub incoming_timestep: u32,
    pub own_position: Point3,
    pub incoming_position: Point3,
    /// Euclidean distance between the two place descriptors.
    pub descriptor_distance: f64,
}

/// Build the index over a run's records. Fails on an empty record set.
pub fn build_index(records: &[DescriptorRecord]) -> Result<DescriptorIndex> {
    if records.is_empty() {
        return Err(FrameError::EmptyRecordSet);
    }
    let mut usable: Vec<&DescriptorRecord> = records.iter().filter(|r| !r.query.is_zero()).collect();
    usable.sort_by_key(|r| r.timestep);
    let points: Vec<[f64; DESCRIPTOR_LEN]> = usable.iter().map(|r| *r.query.values()).collect();
    let meta = usable.iter().map(|r| (r.timestep, r.position)).collect();
    Ok(DescriptorIndex {
        tree: KdTree::build(&points),
        meta,
    })
}

impl DescriptorIndex {
    /// Indexed (non-degenerate) record count.
    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    fn match_for(&self, incoming: &DescriptorRecord, tree_idx: usize, dist_sq: f64) -> OverlapMatch {
        let (own_timestep, own_position) = self.meta[tree_idx];
        OverlapMatch {
            own_timestep,
            incoming_timestep: incoming.timestep,
            own_position,
            incoming_position: incoming.position,
            descriptor_distance: dist_sq.sqrt(),
        }
    }
}

/// The single best pairing over every incoming record: the exact global
/// minimum descriptor distance against the index, ties resolved toward the
/// smaller indexed timestep and then the smaller incoming timestep.
///
/// Fails with `NoDiscriminativeOverlap` when either side has no record with
/// a non-zero place descriptor.
///
/// Axis-aligned tree descent prunes nothing at this dimensionality, so the
/// argmin over all pairs runs as a blocked exact scan: a block of indexed
/// descriptors stays cache-hot while a chunk of queries sweeps over it, and
/// a bound shared across threads lets each distance loop stop early. The
/// bound is inclusive, so exact ties always survive to the tie comparison.
pub fn query_best_pair(
    index: &DescriptorIndex,
    incoming: &[DescriptorRecord],
) -> Result<OverlapMatch> {
    if incoming.is_empty() {
        return Err(FrameError::EmptyRecordSet);
    }
    let usable: Vec<&DescriptorRecord> =
        incoming.iter().filter(|r| !r.query.is_zero()).collect();
    if index.is_empty() || usable.is_empty() {
        return Err(FrameError::NoDiscriminativeOverlap);
    }
    // Best squared distance seen by any thread. Non-negative IEEE doubles
    // order like their bit patterns, so an atomic min over bits is an atomic
    // min over values; a stale (larger) read is still a valid bound.
    let gate = AtomicU64::new(f64::INFINITY.to_bits());
    let best = usable
        .par_chunks(QUERY_CHUNK)
        .filter_map(|chunk| {
            // (squared distance, own timestep, incoming timestep, index, record)
            let mut local: Option<(f64, u32, u32, usize, &DescriptorRecord)> = None;
            for block_start in (0..index.len()).step_by(POINT_BLOCK) {
                let block_end = (block_start + POINT_BLOCK).min(index.len());
                for &inc in chunk {
                    let shared = f64::from_bits(gate.load(Ordering::Relaxed));
                    let mut bound = local.map_or(shared, |(d2, ..)| shared.min(d2));
                    for i in block_start..block_end {
                        let d2 = dist_sq_bounded(index.tree.point(i), inc.query.values(), bound);
                        if d2 > bound {
                            continue;
                        }
                        let cand = (d2, index.meta[i].0, inc.timestep);
                        let replace = match &local {
                            None => true,
                            Some((bd2, bown, binc, ..)) => cand < (*bd2, *bown, *binc),
                        };
                        if replace {
                            local = Some((d2, cand.1, cand.2, i, inc));
                            gate.fetch_min(d2.to_bits(), Ordering::Relaxed);
                            bound = d2;
                        }
                    }
                }
            }
            local
        })
        .reduce_with(|a, b| if (b.0, b.1, b.2) < (a.0, a.1, a.2) { b } else { a });
    let (d2, _, _, tree_idx, inc) = best.ok_or(FrameError::NoDiscriminativeOverlap)?;
    Ok(index.match_for(inc, tree_idx, d2))
}

/// Diagnostic listing of the `k` best pairings, ascending by distance with
/// the same tie order as `query_best_pair`. The merge pipeline itself only
/// ever consumes the single best pair.
pub fn query_top_k(
    index: &DescriptorIndex,
    incoming: &[DescriptorRecord],
    k: usize,
) -> Result<Vec<OverlapMatch>> {
    if incoming.is_empty() {
        return Err(FrameError::EmptyRecordSet);
    }
    if index.is_empty() || incoming.iter().all(|r| r.query.is_zero()) {
        return Err(FrameError::NoDiscriminativeOverlap);
    }
    let mut all: Vec<OverlapMatch> = incoming
        .iter()
        .filter(|r| !r.query.is_zero())
        .flat_map(|r| {
            index
                .tree
                .k_nearest(r.query.values(), k)
                .into_iter()
                .map(|(idx, d2)| index.match_for(r, idx, d2))
                .collect::<Vec<_>>()
        })
        .collect();
    all.sort_by(|a, b| {
        (a.descriptor_distance, a.own_timestep, a.incoming_timestep)
            .partial_cmp(&(b.descriptor_distance, b.own_timestep, b.incoming_timestep))
            .expect("descriptor distances are finite")
    });
    all.truncate(k);
    Ok(all)
}

/// Initial alignment from a matched pair and a regressed yaw: rotate the
/// incoming map by `yaw` about its matched keyframe position, then translate
/// that keyframe onto the indexed keyframe. The matched incoming position
/// lands exactly on the indexed position.
pub fn initial_transform(m: &OverlapMatch, yaw: f64) -> TransformSE3 {
    let r = TransformSE3::from_yaw_translation(yaw, Vector3::zeros());
    let p1 = m.own_position.vector();
    let p2 = m.incoming_position.vector();
    let translation = p1 - r.rotation() * p2;
    TransformSE3::from_yaw_translation(yaw, translation)
}

/// The textbook form of the initial alignment: rotation about the incoming
/// map origin with translation `p1 - p2`. Exposed behind a flag for
/// comparison runs; the matched keyframe only maps onto its counterpart
/// when the yaw offset is zero.
pub fn initial_transform_raw(m: &OverlapMatch, yaw: f64) -> TransformSE3 {
    let translation = m.own_position.vector() - m.incoming_position.vector();
    TransformSE3::from_yaw_translation(yaw, translation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{OrientDescriptor, QueryDescriptor};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn record(timestep: u32, position: Point3, q: [f64; DESCRIPTOR_LEN]) -> DescriptorRecord {
        DescriptorRecord {
            query: QueryDescriptor::normalized(q),
            orient: OrientDescriptor::new([1.0; DESCRIPTOR_LEN]).unwrap(),
            position,
            timestep,
        }
    }

    fn unit_axis(i: usize) -> [f64; DESCRIPTOR_LEN] {
        let mut v = [0.0; DESCRIPTOR_LEN];
        v[i] = 1.0;
        v
    }

    fn random_unit(rng: &mut impl Rng) -> [f64; DESCRIPTOR_LEN] {
        let mut v = [0.0; DESCRIPTOR_LEN];
        for x in v.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        v
    }

    /// Plain double-loop reference: global minimum of descriptor distance
    /// with (own timestep, incoming timestep) tie order.
    fn brute_best(
        indexed: &[DescriptorRecord],
        incoming: &[DescriptorRecord],
    ) -> Option<(f64, u32, u32)> {
        let mut best: Option<(f64, u32, u32)> = None;
        for inc in incoming {
            if inc.query.is_zero() {
                continue;
            }
            for own in indexed {
                if own.query.is_zero() {
                    continue;
                }
                let d = own.query.distance(&inc.query);
                let cand = (d, own.timestep, inc.timestep);
                if best.map_or(true, |b| cand < b) {
                    best = Some(cand);
                }
            }
        }
        best
    }

    #[test]
    fn empty_record_set_is_an_error() {
        assert!(matches!(build_index(&[]), Err(FrameError::EmptyRecordSet)));
    }

    #[test]
    fn singleton_index_matches_itself() {
        let r = record(4, Point3::new(1.0, 2.0, 0.0), unit_axis(9));
        let index = build_index(std::slice::from_ref(&r)).unwrap();
        let m = query_best_pair(&index, &[record(11, Point3::new(5.0, 5.0, 0.0), unit_axis(9))])
            .unwrap();
        assert_eq!(m.own_timestep, 4);
        assert_eq!(m.incoming_timestep, 11);
        assert!(m.descriptor_distance <= 1e-12);
    }

    #[test]
    fn ties_resolve_to_smallest_indexed_then_incoming_timestep() {
        // Two identical indexed descriptors inserted out of timestep order.
        let indexed = vec![
            record(7, Point3::new(0.0, 0.0, 0.0), unit_axis(3)),
            record(3, Point3::new(1.0, 0.0, 0.0), unit_axis(3)),
        ];
        let incoming = vec![
            record(9, Point3::new(0.0, 1.0, 0.0), unit_axis(3)),
            record(2, Point3::new(0.0, 2.0, 0.0), unit_axis(3)),
        ];
        let index = build_index(&indexed).unwrap();
        let m = query_best_pair(&index, &incoming).unwrap();
        assert_eq!(m.own_timestep, 3);
        assert_eq!(m.incoming_timestep, 2);
    }

    #[test]
    fn matches_exhaustive_search_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let n = rng.gen_range(1..120);
            let m = rng.gen_range(1..120);
            let indexed: Vec<_> = (0..n)
                .map(|i| record(i as u32 * 2, Point3::new(i as f64, 0.0, 0.0), random_unit(&mut rng)))
                .collect();
            let incoming: Vec<_> = (0..m)
                .map(|j| record(j as u32 * 3, Point3::new(0.0, j as f64, 0.0), random_unit(&mut rng)))
                .collect();
            let index = build_index(&indexed).unwrap();
            let got = query_best_pair(&index, &incoming).unwrap();
            let want = brute_best(&indexed, &incoming).unwrap();
            assert_eq!(got.descriptor_distance, want.0);
            assert_eq!(got.own_timestep, want.1);
            assert_eq!(got.incoming_timestep, want.2);
        }
    }

    #[test]
    fn featureless_records_cannot_match() {
        let zero = [0.0; DESCRIPTOR_LEN];
        let indexed = vec![record(0, Point3::new(0.0, 0.0, 0.0), zero)];
        let incoming = vec![record(1, Point3::new(0.0, 0.0, 0.0), unit_axis(0))];
        let index = build_index(&indexed).unwrap();
        assert!(matches!(
            query_best_pair(&index, &incoming),
            Err(FrameError::NoDiscriminativeOverlap)
        ));

        // And a zero incoming record never outranks a real pairing.
        let indexed = vec![record(0, Point3::new(0.0, 0.0, 0.0), unit_axis(5))];
        let incoming = vec![
            record(1, Point3::new(0.0, 0.0, 0.0), zero),
            record(2, Point3::new(0.0, 0.0, 0.0), unit_axis(6)),
        ];
        let index = build_index(&indexed).unwrap();
        let m = query_best_pair(&index, &incoming).unwrap();
        assert_eq!(m.incoming_timestep, 2);
    }

    #[test]
    fn top_k_is_sorted_and_consistent_with_best() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let indexed: Vec<_> = (0..40)
            .map(|i| record(i, Point3::new(i as f64, 0.0, 0.0), random_unit(&mut rng)))
            .collect();
        let incoming: Vec<_> = (0..30)
            .map(|j| record(j, Point3::new(0.0, j as f64, 0.0), random_unit(&mut rng)))
            .collect();
        let index = build_index(&indexed).unwrap();
        let top = query_top_k(&index, &incoming, 10).unwrap();
        assert_eq!(top.len(), 10);
        for w in top.windows(2) {
            assert!(w[0].descriptor_distance <= w[1].descriptor_distance);
        }
        let best = query_best_pair(&index, &incoming).unwrap();
        assert_eq!(top[0].own_timestep, best.own_timestep);
        assert_eq!(top[0].incoming_timestep, best.incoming_timestep);
    }

    #[test]
    fn initial_transform_maps_incoming_keyframe_onto_indexed() {
        let m = OverlapMatch {
            own_timestep: 0,
            incoming_timestep: 0,
            own_position: Point3::new(0.0, 0.0, 0.0),
            incoming_position: Point3::new(2.0, 0.0, 0.0),
            descriptor_distance: 0.0,
        };
        let t = initial_transform(&m, PI);
        let moved = t.apply(&m.incoming_position);
        assert!(moved.distance(&m.own_position) <= 1e-9);
        // Half turn: the rotation part flips x and y.
        assert!((t.rotation()[(0, 0)] + 1.0).abs() <= 1e-12);

        let raw = initial_transform_raw(&m, PI);
        assert!((raw.translation() - Vector3::new(-2.0, 0.0, 0.0)).norm() <= 1e-12);
        // The raw form misplaces the keyframe under a non-zero yaw.
        assert!(raw.apply(&m.incoming_position).distance(&m.own_position) > 1.0);
    }

    #[test]
    fn initial_transform_with_zero_yaw_is_pure_translation() {
        let m = OverlapMatch {
            own_timestep: 0,
            incoming_timestep: 0,
            own_position: Point3::new(3.0, -1.0, 0.5),
            incoming_position: Point3::new(1.0, 1.0, 0.0),
            descriptor_distance: 0.0,
        };
        let t = initial_transform(&m, 0.0);
        assert!((t.translation() - Vector3::new(2.0, -2.0, 0.5)).norm() <= 1e-12);
        let raw = initial_transform_raw(&m, 0.0);
        assert!((raw.translation() - t.translation()).norm() <= 1e-12);
    }

    #[test]
    fn general_yaw_keeps_keyframe_pinned() {
        let m = OverlapMatch {
            own_timestep: 5,
            incoming_timestep: 9,
            own_position: Point3::new(-4.0, 7.0, 1.0),
            incoming_position: Point3::new(10.0, -3.0, 2.0),
            descriptor_distance: 0.1,
        };
        for yaw in [-2.5f64, -0.3, 0.9, 3.0] {
            let t = initial_transform(&m, yaw);
            assert!(t.apply(&m.incoming_position).distance(&m.own_position) <= 1e-9);
            assert!((t.yaw() - yaw).abs() <= 1e-12);
        }
    }
}
