//! Central finite-difference checks of the analytic gradients.

use gca_core::conv::{conv_backward, conv_forward, KeypointInput, LayerParams};
use gca_core::learner::cross_entropy;
use gca_core::network::{build_geometry, Ablation, ArchConfig, GcaNetwork, GeometryPlan};
use gca_core::pcio::PointCloud;
use gca_core::seed::rng_for;
use gca_core::{Result, Vec3};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;

/// Relative error of one tensor's gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub suite: String,
    pub instance: usize,
    pub tensor: String,
    pub len: usize,
    pub relative_error: f64,
}

impl TensorCheck {
    pub fn passed(&self) -> bool {
        self.relative_error < TOLERANCE
    }
}

/// `‖a - n‖ / max(‖a‖, ‖n‖, 1e-8)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(1e-8)
}

fn central_difference(len: usize, mut f: impl FnMut(usize, f64) -> f64) -> Vec<f64> {
    (0..len).map(|i| (f(i, STEP) - f(i, -STEP)) / (2.0 * STEP)).collect()
}

fn uniform(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Single-layer checks: every parameter tensor and the input features, for
/// `instances` random layers, against the objective `u · output`.
pub fn conv_suite(seed: u64, instances: usize) -> Result<Vec<TensorCheck>> {
    let (c_in, c_out, rows, k) = (3, 4, 8, 6);
    let mut out = Vec::new();
    for inst in 0..instances {
        let mut rng = rng_for(seed, &[0xC0, inst as u64]);
        let mut params = LayerParams::zeros(c_in, c_out, rows);
        for t in params.tensors_mut() {
            *t = uniform(&mut rng, t.len());
        }
        let relations = uniform(&mut rng, k * rows * 4);
        let features = uniform(&mut rng, k * c_in);
        let upstream = uniform(&mut rng, c_out);
        let objective = |p: &LayerParams, f: &[f64]| -> f64 {
            let (y, _) = conv_forward(p, KeypointInput { relations: &relations, features: f }).expect("shapes");
            y.iter().zip(&upstream).map(|(a, b)| a * b).sum()
        };
        let input = KeypointInput {
            relations: &relations,
            features: &features,
        };
        let (_, act) = conv_forward(&params, input)?;
        let (grads, feature_grads) = conv_backward(&params, &act, input, &upstream)?;
        for (t, name) in ["kernel", "kernel_bias", "lift", "lift_bias"].iter().enumerate() {
            let numeric = central_difference(grads.tensors()[t].len(), |i, h| {
                let mut p = params.clone();
                p.tensors_mut()[t][i] += h;
                objective(&p, &features)
            });
            out.push(TensorCheck {
                suite: "conv".into(),
                instance: inst,
                tensor: name.to_string(),
                len: numeric.len(),
                relative_error: relative_error(grads.tensors()[t], &numeric),
            });
        }
        let numeric = central_difference(features.len(), |i, h| {
            let mut f = features.clone();
            f[i] += h;
            objective(&params, &f)
        });
        out.push(TensorCheck {
            suite: "conv".into(),
            instance: inst,
            tensor: "features".into(),
            len: numeric.len(),
            relative_error: relative_error(&feature_grads, &numeric),
        });
    }
    Ok(out)
}

/// Small two-layer network used by the network suite.
pub fn small_arch() -> ArchConfig {
    ArchConfig::custom(&[16, 8], &[4, 6], 8, &[6], 3, Ablation::default())
}

fn random_cloud(seed: u64, n: usize) -> PointCloud {
    let mut rng = rng_for(seed, &[]);
    let pts = (0..n)
        .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    PointCloud::new(pts).expect("finite points")
}

fn loss(net: &GcaNetwork, plan: &GeometryPlan, label: usize) -> f64 {
    let pass = net.forward_plan(plan).expect("plan matches network");
    cross_entropy(&pass.logits, label).expect("finite logits").0
}

/// Whole-network checks of the cross-entropy gradient for every tensor on
/// `instances` random clouds and weights.
pub fn network_suite(seed: u64, instances: usize) -> Result<Vec<TensorCheck>> {
    let mut out = Vec::new();
    for inst in 0..instances {
        let net = GcaNetwork::new(small_arch(), rng_for(seed, &[0x4E, inst as u64]).random())?;
        let cloud = random_cloud(rng_for(seed, &[0x4F, inst as u64]).random(), 40);
        let plan = build_geometry(&net.config, cloud.points())?;
        let label = inst % net.config.num_classes;
        let pass = net.forward_plan(&plan)?;
        let (_, dlogits) = cross_entropy(&pass.logits, label)?;
        let grads = net.backward(&plan, &pass, &dlogits)?;
        for (t, name) in net.params.tensor_names().into_iter().enumerate() {
            let numeric = central_difference(grads.tensors()[t].len(), |i, h| {
                let mut n = net.clone();
                n.params.tensors_mut()[t][i] += h;
                loss(&n, &plan, label)
            });
            out.push(TensorCheck {
                suite: "network".into(),
                instance: inst,
                tensor: name,
                len: numeric.len(),
                relative_error: relative_error(grads.tensors()[t], &numeric),
            });
        }
    }
    Ok(out)
}

/// True when a zero logit gradient produces an all-zero parameter gradient.
pub fn zero_upstream_check(seed: u64) -> Result<bool> {
    let net = GcaNetwork::new(small_arch(), seed)?;
    let cloud = random_cloud(seed ^ 0x5A, 40);
    let (pass, plan) = net.forward(&cloud)?;
    let grads = net.backward(&plan, &pass, &vec![0.0; net.config.num_classes])?;
    Ok(grads.tensors().iter().all(|t| t.iter().all(|v| *v == 0.0)))
}
