//! Synthetic shape generators.
//!
//! Class shapes all live in the cube `[-1, 1]^3` and touch its faces, so
//! the classes differ by geometry rather than by scale.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::seed::rng_for;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShapeKind {
    Sphere,
    Box,
    Cylinder,
    Torus,
    Cone,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Sphere,
        ShapeKind::Box,
        ShapeKind::Cylinder,
        ShapeKind::Torus,
        ShapeKind::Cone,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Box => "box",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Torus => "torus",
            ShapeKind::Cone => "cone",
        }
    }
}

const TORUS_MAJOR: f64 = 0.7;
const TORUS_MINOR: f64 = 0.3;

fn unit_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn disk_point<R: Rng + ?Sized>(rng: &mut R, radius: f64) -> (f64, f64) {
    let r = radius * rng.random::<f64>().sqrt();
    let t = TAU * rng.random::<f64>();
    (r * t.cos(), r * t.sin())
}

fn sample_surface<R: Rng + ?Sized>(kind: ShapeKind, rng: &mut R) -> Vec3 {
    match kind {
        ShapeKind::Sphere => unit_direction(rng),
        ShapeKind::Box => {
            let face = rng.random_range(0..6usize);
            let a = rng.random_range(-1.0..=1.0);
            let b = rng.random_range(-1.0..=1.0);
            let s = if face % 2 == 0 { 1.0 } else { -1.0 };
            match face / 2 {
                0 => Vec3::new(s, a, b),
                1 => Vec3::new(a, s, b),
                _ => Vec3::new(a, b, s),
            }
        }
        ShapeKind::Cylinder => {
            // Closed cylinder of radius 1, height 2: side area 4π, caps 2π.
            if rng.random::<f64>() < 4.0 / 6.0 {
                let t = TAU * rng.random::<f64>();
                Vec3::new(t.cos(), t.sin(), rng.random_range(-1.0..=1.0))
            } else {
                let (x, y) = disk_point(rng, 1.0);
                let z = if rng.random::<bool>() { 1.0 } else { -1.0 };
                Vec3::new(x, y, z)
            }
        }
        ShapeKind::Torus => {
            // Area density on the tube angle is proportional to R + r cos(theta).
            let theta = loop {
                let t = TAU * rng.random::<f64>();
                let accept = (TORUS_MAJOR + TORUS_MINOR * t.cos()) / (TORUS_MAJOR + TORUS_MINOR);
                if rng.random::<f64>() < accept {
                    break t;
                }
            };
            let phi = TAU * rng.random::<f64>();
            let ring = TORUS_MAJOR + TORUS_MINOR * theta.cos();
            Vec3::new(ring * phi.cos(), ring * phi.sin(), TORUS_MINOR * theta.sin())
        }
        ShapeKind::Cone => {
            // Apex at z = 1, unit-radius base at z = -1.
            let slant = 5f64.sqrt();
            let side_area = PI * slant;
            let base_area = PI;
            if rng.random::<f64>() < side_area / (side_area + base_area) {
                let t = rng.random::<f64>().sqrt();
                let a = TAU * rng.random::<f64>();
                Vec3::new(t * a.cos(), t * a.sin(), 1.0 - 2.0 * t)
            } else {
                let (x, y) = disk_point(rng, 1.0);
                Vec3::new(x, y, -1.0)
            }
        }
    }
}

/// Samples `n` points uniformly on the surface of `kind`, then adds
/// isotropic Gaussian jitter with standard deviation `jitter`.
pub fn generate_shape(kind: ShapeKind, n: usize, jitter: f64, seed: u64) -> Result<PointCloud> {
    if n < 8 {
        return Err(Error::InvalidArgument(format!("need at least 8 points, got {n}")));
    }
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::InvalidArgument(format!("jitter must be >= 0, got {jitter}")));
    }
    let mut rng = rng_for(seed, &[kind as u64]);
    let mut points: Vec<Vec3> = (0..n).map(|_| sample_surface(kind, &mut rng)).collect();
    if jitter > 0.0 {
        let noise = Normal::new(0.0, jitter).expect("valid sigma");
        for p in &mut points {
            for c in p.iter_mut() {
                *c += noise.sample(&mut rng);
            }
        }
    }
    Ok(PointCloud::new(points)?.with_source(format!("{}#{seed}", kind.name())))
}

/// Irregular shapes used by the frame repeatability benchmark. They have no
/// rotational symmetry, so covariance eigenvectors are well separated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchmarkModel {
    BumpySphere,
    BumpyEllipsoid,
    BumpyTorus,
}

impl BenchmarkModel {
    pub const ALL: [BenchmarkModel; 3] = [
        BenchmarkModel::BumpySphere,
        BenchmarkModel::BumpyEllipsoid,
        BenchmarkModel::BumpyTorus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkModel::BumpySphere => "bumpy_sphere",
            BenchmarkModel::BumpyEllipsoid => "bumpy_ellipsoid",
            BenchmarkModel::BumpyTorus => "bumpy_torus",
        }
    }
}

struct Bump {
    center: Vec3,
    height: f64,
    width: f64,
}

impl Bump {
    fn at(&self, dir: &Vec3) -> f64 {
        let d2 = (dir - self.center).norm_squared();
        self.height * (-d2 / (2.0 * self.width * self.width)).exp()
    }
}

/// Generates a benchmark model with `n` points. Bump placement depends on
/// `seed`; the same seed always yields the same surface and samples.
pub fn benchmark_model(model: BenchmarkModel, n: usize, seed: u64) -> Result<PointCloud> {
    if n < 8 {
        return Err(Error::InvalidArgument(format!("need at least 8 points, got {n}")));
    }
    let mut rng = rng_for(seed, &[0xBE7C, model as u64]);
    let bumps: Vec<Bump> = (0..12)
        .map(|_| Bump {
            center: unit_direction(&mut rng),
            height: rng.random_range(0.08..0.25),
            width: rng.random_range(0.2..0.45),
        })
        .collect();
    let displacement = |dir: &Vec3| bumps.iter().map(|b| b.at(dir)).sum::<f64>();

    let points: Vec<Vec3> = (0..n)
        .map(|_| match model {
            BenchmarkModel::BumpySphere => {
                let d = unit_direction(&mut rng);
                d * (1.0 + displacement(&d))
            }
            BenchmarkModel::BumpyEllipsoid => {
                let d = unit_direction(&mut rng);
                let e = Vec3::new(d.x, 0.7 * d.y, 0.45 * d.z);
                e * (1.0 + displacement(&d))
            }
            BenchmarkModel::BumpyTorus => {
                let theta = TAU * rng.random::<f64>();
                let phi = TAU * rng.random::<f64>();
                let normal = Vec3::new(theta.cos() * phi.cos(), theta.cos() * phi.sin(), theta.sin());
                let ring = Vec3::new(phi.cos(), phi.sin(), 0.0) * TORUS_MAJOR;
                let r = TORUS_MINOR * (1.0 + 1.5 * displacement(&normal));
                ring + normal * r
            }
        })
        .collect();
    Ok(PointCloud::new(points)?.with_source(format!("{}#{seed}", model.name())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_points_have_unit_norm() {
        let c = generate_shape(ShapeKind::Sphere, 256, 0.0, 11).unwrap();
        assert_eq!(c.len(), 256);
        for p in c.points() {
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn box_points_lie_on_unit_cube_surface() {
        let c = generate_shape(ShapeKind::Box, 256, 0.0, 11).unwrap();
        for p in c.points() {
            assert!((p.amax() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn all_shapes_fit_the_unit_cube() {
        for kind in ShapeKind::ALL {
            let c = generate_shape(kind, 2000, 0.0, 5).unwrap();
            let extent = c.points().iter().map(|p| p.amax()).fold(0.0, f64::max);
            assert!(extent <= 1.0 + 1e-12, "{kind:?} extent {extent}");
            assert!(extent > 0.95, "{kind:?} extent {extent}");
        }
    }

    #[test]
    fn torus_points_lie_on_torus() {
        let c = generate_shape(ShapeKind::Torus, 500, 0.0, 3).unwrap();
        for p in c.points() {
            let ring = (p.x * p.x + p.y * p.y).sqrt() - TORUS_MAJOR;
            assert!(((ring * ring + p.z * p.z).sqrt() - TORUS_MINOR).abs() < 1e-12);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in ShapeKind::ALL {
            let a = generate_shape(kind, 64, 0.01, 42).unwrap();
            let b = generate_shape(kind, 64, 0.01, 42).unwrap();
            assert_eq!(a, b);
            let c = generate_shape(kind, 64, 0.01, 43).unwrap();
            assert_ne!(a.points(), c.points());
        }
    }

    #[test]
    fn preconditions() {
        assert!(generate_shape(ShapeKind::Sphere, 7, 0.0, 0).is_err());
        assert!(generate_shape(ShapeKind::Sphere, 8, -1.0, 0).is_err());
        assert!(benchmark_model(BenchmarkModel::BumpySphere, 4, 0).is_err());
    }

    #[test]
    fn benchmark_models_are_deterministic() {
        for m in BenchmarkModel::ALL {
            let a = benchmark_model(m, 100, 9).unwrap();
            assert_eq!(a, benchmark_model(m, 100, 9).unwrap());
        }
    }
}
