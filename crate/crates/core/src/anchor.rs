//! Octant anchors and point-anchor relation tensors.
//!
//! The cloud is split into bins by the signs of each point's coordinates in
//! a keypoint's frame; each bin's barycenter (in local coordinates) is an
//! anchor. A neighbour's relation to the anchors is the stack of rows
//! `(x' - a'ₖ, ‖x' - a'ₖ‖)`.

use crate::lrf::Lrf;
use crate::{Error, Result, Vec3};

/// Columns per relation row: three offsets and their norm.
pub const RELATION_WIDTH: usize = 4;

/// Expresses `x` in `frame`: `axesᵀ · (x - origin)`.
pub fn to_local(x: &Vec3, frame: &Lrf) -> Result<Vec3> {
    if frame.degenerate {
        return Err(Error::DegenerateFrame);
    }
    Ok(local_unchecked(x, frame))
}

#[inline]
pub(crate) fn local_unchecked(x: &Vec3, frame: &Lrf) -> Vec3 {
    frame.axes.tr_mul(&(x - frame.origin))
}

/// Bin index of a local point. With 8 bins the order is
/// `+++, ++-, +-+, +--, -++, -+-, --+, ---`; fewer bins drop the z sign,
/// then the y sign. Zero counts as non-negative.
#[inline]
pub fn bin_of(local: &Vec3, anchor_count: usize) -> usize {
    let neg = |v: f64| usize::from(v < 0.0);
    match anchor_count {
        8 => 4 * neg(local.x) + 2 * neg(local.y) + neg(local.z),
        4 => 2 * neg(local.x) + neg(local.y),
        2 => neg(local.x),
        _ => 0,
    }
}

fn check_anchor_count(anchor_count: usize) -> Result<()> {
    if matches!(anchor_count, 1 | 2 | 4 | 8) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "anchor count must be 1, 2, 4 or 8, got {anchor_count}"
        )))
    }
}

/// Anchors of one keypoint, in its local frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub anchors_local: Vec<Vec3>,
    pub occupancy: Vec<usize>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.anchors_local.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors_local.is_empty()
    }

    /// A single anchor at the local origin.
    pub fn origin_only() -> Self {
        Self {
            anchors_local: vec![Vec3::zeros()],
            occupancy: vec![0],
        }
    }
}

/// Bins `points` in `frame` and returns the per-bin barycenters. Empty bins
/// get an anchor at the local origin and occupancy 0.
pub fn make_anchors(points: &[Vec3], frame: &Lrf, anchor_count: usize) -> Result<AnchorSet> {
    if frame.degenerate {
        return Err(Error::DegenerateFrame);
    }
    check_anchor_count(anchor_count)?;
    if points.is_empty() {
        return Err(Error::InvalidArgument("anchors need at least one point".into()));
    }
    let mut sums = vec![Vec3::zeros(); anchor_count];
    let mut occupancy = vec![0usize; anchor_count];
    for x in points {
        let l = local_unchecked(x, frame);
        let b = bin_of(&l, anchor_count);
        sums[b] += l;
        occupancy[b] += 1;
    }
    let anchors_local = sums
        .into_iter()
        .zip(&occupancy)
        .map(|(s, &n)| if n == 0 { Vec3::zeros() } else { s / n as f64 })
        .collect();
    Ok(AnchorSet {
        anchors_local,
        occupancy,
    })
}

/// Writes the `A × 4` relation rows of `x_local` into `out` (row-major).
pub fn relation_rows_into(x_local: &Vec3, anchors: &AnchorSet, out: &mut [f64]) {
    debug_assert_eq!(out.len(), anchors.len() * RELATION_WIDTH);
    for (row, a) in out.chunks_exact_mut(RELATION_WIDTH).zip(&anchors.anchors_local) {
        let d = x_local - a;
        row[0] = d.x;
        row[1] = d.y;
        row[2] = d.z;
        row[3] = d.norm();
    }
}

/// Relation tensor of one neighbour: row `k` is `(x' - a'ₖ, ‖x' - a'ₖ‖)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationTensor {
    pub rows: Vec<[f64; RELATION_WIDTH]>,
}

pub fn relation_tensor(x_local: &Vec3, anchors: &AnchorSet) -> RelationTensor {
    let mut flat = vec![0.0; anchors.len() * RELATION_WIDTH];
    relation_rows_into(x_local, anchors, &mut flat);
    RelationTensor {
        rows: flat
            .chunks_exact(RELATION_WIDTH)
            .map(|r| [r[0], r[1], r[2], r[3]])
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lrf::{build_lrf, LrfConfig};
    use crate::pcio::{sample_rotation, RotationMode};
    use crate::seed::rng_for;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn corners() -> Vec<Vec3> {
        let s = [1.0, -1.0];
        let mut out = Vec::new();
        for x in s {
            for y in s {
                for z in s {
                    out.push(Vec3::new(x, y, z));
                }
            }
        }
        out
    }

    fn world() -> Lrf {
        Lrf::identity_at(Vec3::zeros())
    }

    #[test]
    fn local_coordinates() {
        let f = world();
        assert_eq!(to_local(&Vec3::new(1.0, 2.0, 3.0), &f).unwrap(), Vec3::new(1.0, 2.0, 3.0));
        let shifted = Lrf::identity_at(Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(to_local(&Vec3::new(1.0, 1.0, 1.0), &shifted).unwrap(), Vec3::zeros());
        let bad = Lrf {
            degenerate: true,
            ..world()
        };
        assert!(to_local(&Vec3::zeros(), &bad).is_err());
    }

    #[test]
    fn local_coordinates_preserve_distance() {
        let mut rng = rng_for(5, &[]);
        let pts: Vec<Vec3> = (0..30).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let f = build_lrf(&pts, &pts[0], LrfConfig::default());
        for x in &pts {
            assert!((to_local(x, &f).unwrap().norm() - (x - pts[0]).norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn one_point_per_octant() {
        let a = make_anchors(&corners(), &world(), 8).unwrap();
        assert_eq!(a.anchors_local, corners());
        assert_eq!(a.occupancy, vec![1; 8]);
    }

    #[test]
    fn empty_bin_gets_origin_anchor() {
        let pts = &corners()[..7];
        let a = make_anchors(pts, &world(), 8).unwrap();
        assert_eq!(a.anchors_local[7], Vec3::zeros());
        assert_eq!(a.occupancy[7], 0);
        assert_eq!(a.occupancy.iter().sum::<usize>(), 7);
    }

    #[test]
    fn single_anchor_is_barycenter() {
        let pts = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 3.0, 0.0), Vec3::new(-2.0, 0.0, 6.0)];
        let a = make_anchors(&pts, &world(), 1).unwrap();
        assert!((a.anchors_local[0] - Vec3::new(-1.0 / 3.0, 1.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn coarser_binnings_collapse_z_then_y() {
        let c = corners();
        let a4 = make_anchors(&c, &world(), 4).unwrap();
        assert_eq!(a4.anchors_local, vec![
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(1.0, -1.0, 0.0),
            Vec3::new(-1.0, 1.0, 0.0),
            Vec3::new(-1.0, -1.0, 0.0),
        ]);
        let a2 = make_anchors(&c, &world(), 2).unwrap();
        assert_eq!(a2.anchors_local, vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)]);
        assert!(make_anchors(&c, &world(), 3).is_err());
    }

    #[test]
    fn zero_coordinates_bin_non_negative() {
        assert_eq!(bin_of(&Vec3::zeros(), 8), 0);
        assert_eq!(bin_of(&Vec3::new(0.0, -0.0, -1e-300), 8), 1);
    }

    #[test]
    fn relation_rows() {
        let anchors = AnchorSet::origin_only();
        let r = relation_tensor(&Vec3::new(1.0, 2.0, 3.0), &anchors);
        assert_eq!(r.rows[0], [1.0, 2.0, 3.0, 14f64.sqrt()]);
        let a = make_anchors(&corners(), &world(), 8).unwrap();
        let r = relation_tensor(&corners()[5], &a);
        assert_eq!(r.rows[5], [0.0; 4]);
    }

    #[test]
    fn relation_rows_match_direct_evaluation() {
        let mut rng = rng_for(6, &[]);
        for _ in 0..50 {
            let anchors = AnchorSet {
                anchors_local: (0..8).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect(),
                occupancy: vec![1; 8],
            };
            let x = Vec3::new(rng.random(), rng.random(), rng.random());
            let r = relation_tensor(&x, &anchors);
            for (k, a) in anchors.anchors_local.iter().enumerate() {
                let (dx, dy, dz) = (x[0] - a[0], x[1] - a[1], x[2] - a[2]);
                assert_eq!(r.rows[k][..3], [dx, dy, dz]);
                assert!((r.rows[k][3] - (dx * dx + dy * dy + dz * dz).sqrt()).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn anchors_ignore_point_order(seed in 0u64..2000, count in prop_oneof![Just(1usize), Just(2), Just(4), Just(8)]) {
            let mut rng = rng_for(seed, &[]);
            let mut pts: Vec<Vec3> = (0..50).map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let f = build_lrf(&pts, &pts[0], LrfConfig::default());
            let a = make_anchors(&pts, &f, count).unwrap();
            pts.shuffle(&mut rng);
            let b = make_anchors(&pts, &f, count).unwrap();
            prop_assert_eq!(&a.occupancy, &b.occupancy);
            prop_assert_eq!(a.occupancy.iter().sum::<usize>(), 50);
            for (x, y) in a.anchors_local.iter().zip(&b.anchors_local) {
                prop_assert!((x - y).norm() < 1e-12);
            }
        }

        #[test]
        fn relations_are_rotation_invariant(seed in 0u64..2000) {
            let mut rng = rng_for(seed, &[]);
            let pts: Vec<Vec3> = (0..60).map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let r = sample_rotation(RotationMode::SO3, &mut rng);
            let rpts: Vec<Vec3> = pts.iter().map(|p| r.apply(p)).collect();
            let k = (seed % 60) as usize;
            let fa = build_lrf(&pts, &pts[k], LrfConfig::default());
            let fb = build_lrf(&rpts, &rpts[k], LrfConfig::default());
            prop_assume!(!fa.degenerate && !fa.o_fallback_used);
            let aa = make_anchors(&pts, &fa, 8).unwrap();
            let ab = make_anchors(&rpts, &fb, 8).unwrap();
            prop_assert_eq!(&aa.occupancy, &ab.occupancy);
            for j in 0..60 {
                let ta = relation_tensor(&to_local(&pts[j], &fa).unwrap(), &aa);
                let tb = relation_tensor(&to_local(&rpts[j], &fb).unwrap(), &ab);
                for (ra, rb) in ta.rows.iter().zip(&tb.rows) {
                    for c in 0..4 {
                        prop_assert!((ra[c] - rb[c]).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
