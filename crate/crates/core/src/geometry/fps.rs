use crate::{Error, Result, Vec3};

/// Keypoint indices in farthest-point selection order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeypointSet {
    pub indices: Vec<usize>,
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Greedy farthest point sampling of `m` indices, starting from index 0.
///
/// Each step picks the unselected point whose squared distance to the
/// selected set is largest; ties go to the lower index.
pub fn farthest_point_sampling(points: &[Vec3], m: usize) -> Result<KeypointSet> {
    let n = points.len();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "farthest point sampling needs 1 <= m <= {n}, got {m}"
        )));
    }
    let mut selected = vec![false; n];
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut indices = Vec::with_capacity(m);
    let mut current = 0;
    loop {
        selected[current] = true;
        indices.push(current);
        if indices.len() == m {
            break;
        }
        let c = points[current];
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if selected[i] {
                continue;
            }
            let d2 = (p - c).norm_squared();
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
            if best.is_none_or(|(_, bd)| min_d2[i] > bd) {
                best = Some((i, min_d2[i]));
            }
        }
        current = best.expect("m <= n leaves an unselected point").0;
    }
    Ok(KeypointSet { indices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> Vec<Vec3> {
        xs.iter().map(|&x| Vec3::new(x, 0.0, 0.0)).collect()
    }

    /// Direct restatement of the selection rule: recompute every min
    /// distance from scratch at each step.
    fn brute_force(points: &[Vec3], m: usize) -> Vec<usize> {
        let mut sel = vec![0usize];
        while sel.len() < m {
            let mut best = None;
            let mut best_d = -1.0;
            for i in 0..points.len() {
                if sel.contains(&i) {
                    continue;
                }
                let d = sel
                    .iter()
                    .map(|&s| (points[i] - points[s]).norm())
                    .fold(f64::INFINITY, f64::min);
                if d > best_d {
                    best_d = d;
                    best = Some(i);
                }
            }
            sel.push(best.unwrap());
        }
        sel
    }

    #[test]
    fn axis_example() {
        let pts = line(&[0.0, 1.0, 2.0, 10.0]);
        assert_eq!(farthest_point_sampling(&pts, 3).unwrap().indices, vec![0, 3, 2]);
        assert_eq!(brute_force(&pts, 3), vec![0, 3, 2]);
    }

    #[test]
    fn exhaustive_selection() {
        let pts = line(&[0.0, 1.0, 2.0, 10.0]);
        let all = farthest_point_sampling(&pts, 4).unwrap().indices;
        assert_eq!(all, vec![0, 3, 2, 1]);
    }

    #[test]
    fn single_point() {
        let pts = line(&[5.0]);
        assert_eq!(farthest_point_sampling(&pts, 1).unwrap().indices, vec![0]);
    }

    #[test]
    fn ties_and_duplicates_take_lowest_index() {
        // Points 1 and 2 are both at distance 1 from point 0.
        let pts = line(&[0.0, 1.0, -1.0, 0.0]);
        assert_eq!(farthest_point_sampling(&pts, 4).unwrap().indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn out_of_range() {
        let pts = line(&[0.0, 1.0]);
        assert!(farthest_point_sampling(&pts, 0).is_err());
        assert!(farthest_point_sampling(&pts, 3).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force(raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..40), frac in 0.0f64..1.0) {
            let pts: Vec<Vec3> = raw.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
            let m = 1 + ((pts.len() - 1) as f64 * frac) as usize;
            prop_assert_eq!(farthest_point_sampling(&pts, m).unwrap().indices, brute_force(&pts, m));
        }

        #[test]
        fn rotation_preserves_selection(raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 8..60),
                                        q in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)) {
            prop_assume!(q.0.abs() + q.1.abs() + q.2.abs() + q.3.abs() > 0.1);
            let r = Rotation::from_quaternion(q.0, q.1, q.2, q.3);
            let pts: Vec<Vec3> = raw.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
            let rotated: Vec<Vec3> = pts.iter().map(|p| r.apply(p)).collect();
            let m = pts.len() / 2;
            prop_assert_eq!(farthest_point_sampling(&pts, m).unwrap(), farthest_point_sampling(&rotated, m).unwrap());
        }
    }
}
