//! Point cloud input/output, synthetic shapes, datasets and rotation
//! augmentation.

mod dataset;
mod format;
mod shapes;

pub use dataset::{toy_suite, Dataset, DatasetManifest, ManifestEntry, Split, ToySuiteConfig};
pub use format::{load_cloud, parse_cloud, save_cloud, write_cloud, CloudFormat};
pub use shapes::{benchmark_model, generate_shape, BenchmarkModel, ShapeKind};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Rotation;
use crate::{Error, Result, Vec3};

/// An ordered set of 3D points with an optional class label.
///
/// Construction rejects empty clouds and non-finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    pub label: Option<usize>,
    pub source: Option<String>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("point cloud must contain at least one point".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFiniteValue(format!("point {i}")));
        }
        Ok(Self {
            points,
            label: None,
            source: None,
        })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Replaces the points, keeping label and source.
    pub(crate) fn map_points(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            points: self.points.iter().map(f).collect(),
            label: self.label,
            source: self.source.clone(),
        }
    }
}

/// Rotation augmentation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RotationMode {
    /// No rotation.
    #[serde(rename = "none")]
    None,
    /// Uniform angle in `[0, 2π)` about the z-axis.
    #[serde(rename = "z")]
    AroundZ,
    /// Uniform over the rotation group.
    #[serde(rename = "so3")]
    SO3,
}

impl RotationMode {
    pub fn name(self) -> &'static str {
        match self {
            RotationMode::None => "none",
            RotationMode::AroundZ => "z",
            RotationMode::SO3 => "so3",
        }
    }
}

impl std::str::FromStr for RotationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "identity" => Ok(RotationMode::None),
            "z" | "aroundz" | "around-z" => Ok(RotationMode::AroundZ),
            "so3" => Ok(RotationMode::SO3),
            other => Err(Error::InvalidArgument(format!("unknown rotation mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for RotationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Draws a rotation according to `mode`.
///
/// SO3 samples use Shoemake's uniform unit quaternion construction.
pub fn sample_rotation<R: Rng + ?Sized>(mode: RotationMode, rng: &mut R) -> Rotation {
    use std::f64::consts::TAU;
    match mode {
        RotationMode::None => Rotation::identity(),
        RotationMode::AroundZ => Rotation::about_z(rng.random::<f64>() * TAU),
        RotationMode::SO3 => {
            let u1: f64 = rng.random();
            let u2: f64 = rng.random();
            let u3: f64 = rng.random();
            let a = (1.0 - u1).sqrt();
            let b = u1.sqrt();
            let (x, y) = ((TAU * u2).sin() * a, (TAU * u2).cos() * a);
            let (z, w) = ((TAU * u3).sin() * b, (TAU * u3).cos() * b);
            Rotation::from_quaternion(w, x, y, z)
        }
    }
}
