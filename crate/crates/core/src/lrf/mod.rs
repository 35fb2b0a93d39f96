//! Local reference frames.
//!
//! A frame at keypoint `p` comes from the eigenvectors of a covariance of
//! offsets `q - p`. In the weighted variant the covariance runs over the
//! whole keypoint set with weights that fall off linearly with distance,
//! reaching zero at the farthest point. The eigenvector signs of `e1` and
//! `e2` are fixed by the weighted mean offset `O`, and `e3 = e1 × e2`.

mod repeatability;

pub use repeatability::{
    mean_nn_distance, repeatability_experiment, ErrorHistogram, RepeatabilityConfig,
    RepeatabilityReport,
};

use serde::{Deserialize, Serialize};

use crate::geometry::sym_eig3;
use crate::{Error, Mat3, Result, Vec3};

/// Relative threshold on `|eᵢ·O| / ‖O‖` below which `O` cannot orient `eᵢ`.
pub const ORIENTATION_TOLERANCE: f64 = 1e-9;
/// Below this norm `O` is treated as zero.
pub const ZERO_ORIENTATION: f64 = 1e-12;

/// A right-handed orthonormal frame attached to a keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Lrf {
    pub origin: Vec3,
    /// Columns are the axes `e1, e2, e3`, by descending covariance eigenvalue.
    pub axes: Mat3,
    pub eigenvalues: [f64; 3],
    /// The covariance had repeated eigenvalues; the axes are not unique.
    pub degenerate: bool,
    /// At least one sign was fixed by the fallback rule instead of `O`.
    pub o_fallback_used: bool,
}

impl Lrf {
    /// Frame aligned with the world axes.
    pub fn identity_at(origin: Vec3) -> Self {
        Self {
            origin,
            axes: Mat3::identity(),
            eigenvalues: [0.0; 3],
            degenerate: false,
            o_fallback_used: false,
        }
    }

    fn degenerate_at(origin: Vec3) -> Self {
        Self {
            degenerate: true,
            ..Self::identity_at(origin)
        }
    }

    pub fn axis(&self, i: usize) -> Vec3 {
        self.axes.column(i).into_owned()
    }
}

/// Switches for the frame construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LrfConfig {
    /// Distance-weighted covariance over the given points. When false, the
    /// plain covariance sum and the unweighted mean offset are used.
    pub weighted: bool,
    /// Orient `e1`, `e2` toward `O`. When false, each axis is flipped so its
    /// first non-zero component is positive, which is not rotation-stable.
    pub use_o_vector: bool,
}

impl Default for LrfConfig {
    fn default() -> Self {
        Self {
            weighted: true,
            use_o_vector: true,
        }
    }
}

/// Normalised distance weights `wᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn weights(&self) -> &[f64] {
        &self.0
    }
}

/// `wᵢ = (m - ‖qᵢ - p‖) / Σⱼ (m - ‖qⱼ - p‖)` with `m` the largest distance.
pub fn distance_weights(q_points: &[Vec3], p: &Vec3) -> Result<WeightVector> {
    if q_points.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "distance weights need at least 2 points, got {}",
            q_points.len()
        )));
    }
    let dist: Vec<f64> = q_points.iter().map(|q| (q - p).norm()).collect();
    let m = dist.iter().copied().fold(0.0, f64::max);
    if m == 0.0 {
        return Err(Error::DegenerateInput("all points coincide with the keypoint".into()));
    }
    let raw: Vec<f64> = dist.iter().map(|d| m - d).collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateInput("all points are equidistant from the keypoint".into()));
    }
    Ok(WeightVector(raw.into_iter().map(|r| r / total).collect()))
}

fn outer_sum(offsets: impl Iterator<Item = (f64, Vec3)>) -> Mat3 {
    let mut c = [0.0f64; 6];
    for (w, d) in offsets {
        c[0] += w * d.x * d.x;
        c[1] += w * d.x * d.y;
        c[2] += w * d.x * d.z;
        c[3] += w * d.y * d.y;
        c[4] += w * d.y * d.z;
        c[5] += w * d.z * d.z;
    }
    Mat3::new(c[0], c[1], c[2], c[1], c[3], c[4], c[2], c[4], c[5])
}

/// `Σᵢ wᵢ (qᵢ - p)(qᵢ - p)ᵀ`.
pub fn weighted_covariance(q_points: &[Vec3], p: &Vec3, weights: &WeightVector) -> Mat3 {
    outer_sum(weights.0.iter().zip(q_points).map(|(&w, q)| (w, q - p)))
}

/// `Σᵢ (xᵢ - p)(xᵢ - p)ᵀ` over a neighbourhood.
pub fn local_covariance(points: &[Vec3], p: &Vec3) -> Mat3 {
    outer_sum(points.iter().map(|x| (1.0, x - p)))
}

/// `O = Σᵢ wᵢ (qᵢ - p)`.
pub fn main_orientation(q_points: &[Vec3], p: &Vec3, weights: &WeightVector) -> Vec3 {
    weights
        .0
        .iter()
        .zip(q_points)
        .map(|(&w, q)| (q - p) * w)
        .sum()
}

/// Orients `axis` toward the point with the largest absolute projection,
/// lowest index first. Returns the (possibly flipped) axis.
fn orient_by_extreme_projection(axis: Vec3, q_points: &[Vec3], p: &Vec3) -> Vec3 {
    let mut best = 0.0f64;
    for q in q_points {
        let proj = axis.dot(&(q - p));
        if proj.abs() > best.abs() {
            best = proj;
        }
    }
    if best < 0.0 {
        -axis
    } else {
        axis
    }
}

fn orient_by_first_component(axis: Vec3) -> Vec3 {
    match axis.iter().find(|c| **c != 0.0) {
        Some(c) if *c < 0.0 => -axis,
        _ => axis,
    }
}

/// Builds the frame at `p` from `q_points`.
///
/// Degeneracy (repeated eigenvalues, or no usable weights) is reported via
/// [`Lrf::degenerate`]; the returned axes are then the identity.
pub fn build_lrf(q_points: &[Vec3], p: &Vec3, config: LrfConfig) -> Lrf {
    let (cov, o) = if config.weighted {
        match distance_weights(q_points, p) {
            Ok(w) => (weighted_covariance(q_points, p, &w), main_orientation(q_points, p, &w)),
            Err(_) => return Lrf::degenerate_at(*p),
        }
    } else {
        if q_points.is_empty() {
            return Lrf::degenerate_at(*p);
        }
        let mean = q_points.iter().map(|q| q - p).sum::<Vec3>() / q_points.len() as f64;
        (local_covariance(q_points, p), mean)
    };

    let eig = match sym_eig3(&cov) {
        Ok(e) if !e.degenerate => e,
        Ok(e) => {
            return Lrf {
                eigenvalues: e.eigenvalues,
                ..Lrf::degenerate_at(*p)
            }
        }
        Err(_) => return Lrf::degenerate_at(*p),
    };

    let o_norm = o.norm();
    let mut fallback = false;
    let mut oriented = [eig.eigenvector(0), eig.eigenvector(1)];
    for axis in &mut oriented {
        *axis = if config.use_o_vector {
            let d = axis.dot(&o);
            if o_norm < ZERO_ORIENTATION || d.abs() < ORIENTATION_TOLERANCE * o_norm {
                fallback = true;
                orient_by_extreme_projection(*axis, q_points, p)
            } else if d < 0.0 {
                -*axis
            } else {
                *axis
            }
        } else {
            orient_by_first_component(*axis)
        };
    }
    let [e1, e2] = oriented;
    let e3 = e1.cross(&e2);
    Lrf {
        origin: *p,
        axes: Mat3::from_columns(&[e1, e2, e3]),
        eigenvalues: eig.eigenvalues,
        degenerate: false,
        o_fallback_used: fallback,
    }
}

/// Angle in degrees of the relative rotation `aᵀ·b` between two frames.
///
/// Evaluated as `atan2(sin θ, cos θ)` with `cos θ = (Tr(aᵀb) - 1)/2` and
/// `sin θ` from the skew part, which equals `arccos` of the clamped cosine
/// but keeps full precision near 0° and 180°.
pub fn lrf_error(a: &Lrf, b: &Lrf) -> Result<f64> {
    if a.degenerate || b.degenerate {
        return Err(Error::DegenerateFrame);
    }
    let rel = a.axes.transpose() * b.axes;
    let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let skew = Vec3::new(
        rel[(2, 1)] - rel[(1, 2)],
        rel[(0, 2)] - rel[(2, 0)],
        rel[(1, 0)] - rel[(0, 1)],
    );
    let sin = (skew.norm() / 2.0).min(1.0);
    Ok(sin.atan2(cos).to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;
    use crate::pcio::{sample_rotation, RotationMode};
    use crate::seed::rng_for;
    use proptest::prelude::*;
    use rand::Rng;

    fn example_q() -> Vec<Vec3> {
        vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 2.0, 0.0)]
    }

    fn random_points(seed: u64, n: usize) -> Vec<Vec3> {
        let mut rng = rng_for(seed, &[]);
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-0.6..0.6), rng.random_range(-0.3..0.3)))
            .collect()
    }

    #[test]
    fn weights_example() {
        let w = distance_weights(&example_q(), &Vec3::zeros()).unwrap();
        // m = 2: raw weights (2, 1, 0) over a total of 3.
        assert!((w.0[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w.0[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(w.0[2], 0.0);
    }

    #[test]
    fn weights_reject_coincident_points() {
        let q = vec![Vec3::new(1.0, 1.0, 1.0); 4];
        assert!(matches!(
            distance_weights(&q, &Vec3::new(1.0, 1.0, 1.0)),
            Err(Error::DegenerateInput(_))
        ));
        assert!(distance_weights(&q[..1], &Vec3::zeros()).is_err());
    }

    #[test]
    fn covariance_and_orientation_example() {
        let q = example_q();
        let p = Vec3::zeros();
        let w = distance_weights(&q, &p).unwrap();
        let cov = weighted_covariance(&q, &p, &w);
        let expected = Mat3::from_diagonal(&Vec3::new(1.0 / 3.0, 0.0, 0.0));
        assert!((cov - expected).abs().max() < 1e-15);
        let o = main_orientation(&q, &p, &w);
        assert!((o - Vec3::new(1.0 / 3.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn covariance_of_all_weight_on_keypoint_is_zero() {
        let q = vec![Vec3::new(0.5, 0.5, 0.5), Vec3::new(3.0, 0.0, 0.0)];
        let w = WeightVector(vec![1.0, 0.0]);
        assert_eq!(weighted_covariance(&q, &q[0], &w), Mat3::zeros());
    }

    #[test]
    fn local_covariance_two_points() {
        // Offsets (1, 0, 0) and (0, 1, 1).
        let p = Vec3::new(1.0, 1.0, 1.0);
        let pts = vec![Vec3::new(2.0, 1.0, 1.0), Vec3::new(1.0, 2.0, 2.0)];
        let expected = Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0);
        assert_eq!(local_covariance(&pts, &p), expected);
        let uniform = WeightVector(vec![1.0; 2]);
        assert_eq!(weighted_covariance(&pts, &p, &uniform), expected);
    }

    #[test]
    fn degenerate_example_is_flagged() {
        let lrf = build_lrf(&example_q(), &Vec3::zeros(), LrfConfig::default());
        assert!(lrf.degenerate);
        assert!(lrf_error(&lrf, &lrf).is_err());
    }

    #[test]
    fn point_symmetric_cloud_uses_fallback() {
        let q = vec![
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(-2.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(0.0, 0.0, 0.5),
            Vec3::new(0.0, 0.0, -0.5),
        ];
        let lrf = build_lrf(&q, &Vec3::zeros(), LrfConfig::default());
        assert!(!lrf.degenerate);
        assert!(lrf.o_fallback_used);
        // The x-pair sits at the maximum distance and gets zero weight, so
        // e1 is the y axis, oriented toward q[2] (lowest index among ties).
        assert!((lrf.axis(0).dot(&q[2]) - 1.0).abs() < 1e-12);
        assert!((lrf.axes.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frames_are_right_handed_and_orthonormal() {
        for seed in 0..50 {
            let q = random_points(seed, 30);
            for cfg in [
                LrfConfig::default(),
                LrfConfig { weighted: false, use_o_vector: true },
                LrfConfig { weighted: false, use_o_vector: false },
            ] {
                let lrf = build_lrf(&q, &q[3], cfg);
                assert!(!lrf.degenerate);
                assert!((lrf.axes.transpose() * lrf.axes - Mat3::identity()).abs().max() < 1e-9);
                assert!((lrf.axes.determinant() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn error_unit_values() {
        use std::f64::consts::{FRAC_PI_2, PI};
        let a = build_lrf(&random_points(1, 20), &Vec3::zeros(), LrfConfig::default());
        let turned = |angle: f64| Lrf {
            axes: a.axes * Rotation::about_z(angle).matrix(),
            ..a.clone()
        };
        assert!(lrf_error(&a, &a).unwrap().abs() < 1e-9);
        assert!((lrf_error(&a, &turned(FRAC_PI_2)).unwrap() - 90.0).abs() < 1e-9);
        assert!((lrf_error(&a, &turned(PI)).unwrap() - 180.0).abs() < 1e-9);
    }

    #[test]
    fn error_matches_arccos_form_and_is_symmetric() {
        let mut rng = rng_for(8, &[]);
        for _ in 0..200 {
            let ra = sample_rotation(RotationMode::SO3, &mut rng);
            let rb = sample_rotation(RotationMode::SO3, &mut rng);
            let a = Lrf { axes: *ra.matrix(), ..Lrf::identity_at(Vec3::zeros()) };
            let b = Lrf { axes: *rb.matrix(), ..Lrf::identity_at(Vec3::zeros()) };
            let tr = (ra.matrix().transpose() * rb.matrix()).trace();
            let reference = ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees();
            let e = lrf_error(&a, &b).unwrap();
            assert!((e - reference).abs() < 1e-6, "{e} vs {reference}");
            assert_eq!(e, lrf_error(&b, &a).unwrap());
            // Left-multiplying both frames by a rotation leaves the error unchanged.
            let rc = sample_rotation(RotationMode::SO3, &mut rng);
            let a2 = Lrf { axes: rc.matrix() * a.axes, ..a.clone() };
            let b2 = Lrf { axes: rc.matrix() * b.axes, ..b.clone() };
            assert!((lrf_error(&a2, &b2).unwrap() - e).abs() < 1e-9);
        }
    }

    #[test]
    fn orientation_conjugates_under_rotation() {
        let q = random_points(2, 25);
        let p = q[0];
        let mut rng = rng_for(3, &[]);
        let r = sample_rotation(RotationMode::SO3, &mut rng);
        let rq: Vec<Vec3> = q.iter().map(|x| r.apply(x)).collect();
        let w = distance_weights(&q, &p).unwrap();
        let rw = distance_weights(&rq, &r.apply(&p)).unwrap();
        let o = main_orientation(&q, &p, &w);
        let ro = main_orientation(&rq, &r.apply(&p), &rw);
        assert!((r.apply(&o) - ro).norm() < 1e-12);
        let cov = weighted_covariance(&q, &p, &w);
        let rcov = weighted_covariance(&rq, &r.apply(&p), &rw);
        assert!((r.matrix() * cov * r.matrix().transpose() - rcov).abs().max() < 1e-12);
        let lc = local_covariance(&q, &p);
        let rlc = local_covariance(&rq, &r.apply(&p));
        assert!((r.matrix() * lc * r.matrix().transpose() - rlc).abs().max() < 1e-12);
    }

    proptest! {
        #[test]
        fn weights_are_normalised(seed in 0u64..5000, n in 2usize..50) {
            let q = random_points(seed, n);
            let w = distance_weights(&q, &q[0]).unwrap();
            prop_assert!((w.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.0.iter().all(|x| *x >= 0.0));
            let far = q.iter().enumerate().max_by(|a, b| (a.1 - q[0]).norm().total_cmp(&(b.1 - q[0]).norm())).unwrap().0;
            prop_assert_eq!(w.0[far], 0.0);
        }

        #[test]
        fn frames_are_rotation_equivariant(seed in 0u64..5000) {
            let q = random_points(seed, 40);
            let mut rng = rng_for(seed, &[1]);
            let r = sample_rotation(RotationMode::SO3, &mut rng);
            let p = q[(seed % 40) as usize];
            let rq: Vec<Vec3> = q.iter().map(|x| r.apply(x)).collect();
            let a = build_lrf(&q, &p, LrfConfig::default());
            let b = build_lrf(&rq, &r.apply(&p), LrfConfig::default());
            prop_assume!(!a.degenerate && !a.o_fallback_used);
            prop_assert!((r.matrix() * a.axes - b.axes).abs().max() < 1e-9);
            // Local coordinates agree.
            for x in &q {
                let la = a.axes.transpose() * (x - p);
                let lb = b.axes.transpose() * (r.apply(x) - r.apply(&p));
                prop_assert!((la - lb).norm() < 1e-9);
            }
        }
    }
}
