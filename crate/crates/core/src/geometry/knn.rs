use crate::{Error, Result, Vec3};

/// The `k` nearest points to a query, sorted by (distance, index).
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    /// Index of the query point when it belongs to the cloud.
    pub center_index: Option<usize>,
    pub neighbor_indices: Vec<usize>,
    pub sq_distances: Vec<f64>,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.neighbor_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbor_indices.is_empty()
    }
}

/// Exhaustive k-nearest-neighbour query; equal distances resolve to the
/// lower index.
pub fn knn(points: &[Vec3], query: &Vec3, k: usize) -> Result<Neighborhood> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("knn needs 1 <= k <= {n}, got {k}")));
    }
    let mut cand: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p - query).norm_squared(), i))
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < n {
        cand.select_nth_unstable_by(k - 1, order);
        cand.truncate(k);
    }
    cand.sort_unstable_by(order);
    Ok(Neighborhood {
        center_index: None,
        neighbor_indices: cand.iter().map(|c| c.1).collect(),
        sq_distances: cand.iter().map(|c| c.0).collect(),
    })
}

/// [`knn`] centered on the cloud point at `center`.
pub fn knn_of(points: &[Vec3], center: usize, k: usize) -> Result<Neighborhood> {
    let q = *points
        .get(center)
        .ok_or_else(|| Error::InvalidArgument(format!("center index {center} out of range")))?;
    let mut nb = knn(points, &q, k)?;
    nb.center_index = Some(center);
    Ok(nb)
}
