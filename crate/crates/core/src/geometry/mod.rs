//! Spatial primitives shared by the frame and convolution code.

mod eig;
mod fps;
mod knn;

pub use eig::{sym_eig3, SymEig3};
pub use fps::{farthest_point_sampling, KeypointSet};
pub use knn::{knn, knn_of, Neighborhood};

use crate::pcio::PointCloud;
use crate::{Error, Mat3, Result, Vec3};

/// A proper rotation matrix (orthogonal, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    /// Tolerance on orthogonality and determinant accepted by [`Rotation::new`].
    pub const TOLERANCE: f64 = 1e-10;

    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Validates `m` as a rotation.
    pub fn new(m: Mat3) -> Result<Self> {
        let ortho = (m * m.transpose() - Mat3::identity()).abs().max();
        let det = m.determinant();
        if ortho > Self::TOLERANCE || (det - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "not a rotation: |RRᵀ - I| = {ortho:e}, det = {det}"
            )));
        }
        Ok(Self(m))
    }

    /// Row-major construction; validated like [`Rotation::new`].
    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::new(Mat3::from_fn(|i, j| rows[i][j]))
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Rotation of the quaternion `w + xi + yj + zk`, normalised first.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        Self(Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.0[(i, j)]))
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// `self` followed by `next`, i.e. the matrix `next · self`.
    pub fn then(&self, next: &Rotation) -> Rotation {
        Rotation(next.0 * self.0)
    }

    pub fn inverse(&self) -> Rotation {
        Rotation(self.0.transpose())
    }
}

/// Rotates every point of `cloud`, keeping order, label and source.
pub fn apply_rotation(cloud: &PointCloud, r: &Rotation) -> PointCloud {
    cloud.map_points(|p| r.apply(p))
}
