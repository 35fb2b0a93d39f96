//! Frame repeatability between a model and a perturbed copy of it.
//!
//! The scene is a random subsample of the model with Gaussian noise. For
//! randomly chosen model points, the nearest scene point is taken as the
//! correspondence and the angle between the two frames is histogrammed in
//! 10° bins.

use std::fmt::Write as _;

use rand::seq::index;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_lrf, lrf_error, Lrf, LrfConfig};
use crate::geometry::{knn, knn_of};
use crate::pcio::PointCloud;
use crate::seed::rng_for;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilityConfig {
    /// Fraction of model points kept in the scene.
    pub subsample_ratio: f64,
    /// Noise standard deviation in units of the model's mean nearest-neighbour distance.
    pub noise_sigma_factor: f64,
    pub n_pairs: usize,
    pub seed: u64,
    /// Neighbourhood size for unweighted (local) frames.
    pub k_neighbors: usize,
    pub lrf: LrfConfig,
}

impl Default for RepeatabilityConfig {
    fn default() -> Self {
        Self {
            subsample_ratio: 0.5,
            noise_sigma_factor: 0.1,
            n_pairs: 1000,
            seed: 0,
            k_neighbors: 32,
            lrf: LrfConfig::default(),
        }
    }
}

/// Counts of angular errors in 18 bins of 10°; the last bin is closed at 180°.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub counts: [u64; ErrorHistogram::BINS],
}

impl ErrorHistogram {
    pub const BINS: usize = 18;
    pub const BIN_WIDTH_DEG: f64 = 10.0;
    pub const CSV_HEADER: &'static str = "bin_start_deg,bin_end_deg,count,fraction";

    pub fn add(&mut self, error_deg: f64) {
        let bin = ((error_deg / Self::BIN_WIDTH_DEG).floor().max(0.0) as usize).min(Self::BINS - 1);
        self.counts[bin] += 1;
    }

    pub fn merge(&mut self, other: &ErrorHistogram) {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let total = self.total();
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (i, &c) in self.counts.iter().enumerate() {
            let frac = if total == 0 { 0.0 } else { c as f64 / total as f64 };
            let start = i as f64 * Self::BIN_WIDTH_DEG;
            let _ = writeln!(out, "{},{},{},{}", start, start + Self::BIN_WIDTH_DEG, c, frac);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilityReport {
    pub config: RepeatabilityConfig,
    pub model_points: usize,
    pub scene_points: usize,
    pub mesh_resolution: f64,
    /// Pairs attempted (`n_pairs` capped at half the model size).
    pub pairs: usize,
    /// Pairs where either frame was degenerate; excluded from the histogram.
    pub degenerate_count: usize,
    pub errors_deg: Vec<f64>,
    pub histogram: ErrorHistogram,
    pub mean_error_deg: f64,
}

/// Mean distance from each point to its nearest other point.
pub fn mean_nn_distance(points: &[Vec3]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let total: f64 = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nb = knn(points, p, 2).expect("at least two points");
            // The query point itself is normally first; skip it by index.
            let j = if nb.neighbor_indices[0] == i { 1 } else { 0 };
            nb.sq_distances[j].sqrt()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / points.len() as f64
}

/// Frame at `points[idx]` under `config`: weighted frames use every point of
/// the cloud as support, unweighted ones the `k` nearest neighbours.
pub fn frame_at(points: &[Vec3], idx: usize, config: &RepeatabilityConfig) -> Result<Lrf> {
    let p = points[idx];
    if config.lrf.weighted {
        Ok(build_lrf(points, &p, config.lrf))
    } else {
        let nb = knn_of(points, idx, config.k_neighbors.min(points.len()))?;
        let local: Vec<Vec3> = nb.neighbor_indices.iter().map(|&j| points[j]).collect();
        Ok(build_lrf(&local, &p, config.lrf))
    }
}

pub fn repeatability_experiment(model: &PointCloud, config: &RepeatabilityConfig) -> Result<RepeatabilityReport> {
    if !(config.subsample_ratio > 0.0 && config.subsample_ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "subsample ratio must be in (0, 1], got {}",
            config.subsample_ratio
        )));
    }
    if config.noise_sigma_factor.is_nan() || config.noise_sigma_factor < 0.0 || config.k_neighbors == 0 {
        return Err(Error::InvalidArgument("noise factor must be >= 0 and k >= 1".into()));
    }
    let pts = model.points();
    let n = pts.len();
    let mesh_resolution = mean_nn_distance(pts);

    let mut rng = rng_for(config.seed, &[0x5CE7E]);
    let keep = ((n as f64 * config.subsample_ratio).round() as usize).clamp(1, n);
    let mut kept = index::sample(&mut rng, n, keep).into_vec();
    kept.sort_unstable();
    let sigma = config.noise_sigma_factor * mesh_resolution;
    let mut scene: Vec<Vec3> = kept.iter().map(|&i| pts[i]).collect();
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma).expect("finite sigma");
        for p in &mut scene {
            for c in p.iter_mut() {
                *c += noise.sample(&mut rng);
            }
        }
    }

    let pairs = config.n_pairs.min(n / 2).max(1).min(n);
    let mut pair_rng = rng_for(config.seed, &[0x9A125]);
    let model_idx = index::sample(&mut pair_rng, n, pairs).into_vec();

    let outcomes: Vec<Option<f64>> = model_idx
        .par_iter()
        .map(|&mi| -> Result<Option<f64>> {
            let sj = knn(&scene, &pts[mi], 1)?.neighbor_indices[0];
            let fm = frame_at(pts, mi, config)?;
            let fs = frame_at(&scene, sj, config)?;
            Ok(lrf_error(&fs, &fm).ok())
        })
        .collect::<Result<_>>()?;

    let mut histogram = ErrorHistogram::default();
    let errors_deg: Vec<f64> = outcomes.iter().flatten().copied().collect();
    for &e in &errors_deg {
        histogram.add(e);
    }
    let mean_error_deg = if errors_deg.is_empty() {
        f64::NAN
    } else {
        errors_deg.iter().sum::<f64>() / errors_deg.len() as f64
    };
    Ok(RepeatabilityReport {
        config: config.clone(),
        model_points: n,
        scene_points: scene.len(),
        mesh_resolution,
        pairs,
        degenerate_count: pairs - errors_deg.len(),
        errors_deg,
        histogram,
        mean_error_deg,
    })
}
