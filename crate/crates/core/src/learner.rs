//! Cross-entropy, Adam, and the training and evaluation loops.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::apply_rotation;
use crate::network::{GcaNetwork, NetworkParams};
use crate::pcio::{sample_rotation, Dataset, PointCloud, RotationMode};
use crate::seed::rng_for;
use crate::{Error, Result};

/// `-log softmax(logits)[label]` and its gradient `softmax - one_hot`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moments per tensor, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Self { m, v, step: 0 }
    }

    pub fn for_params(params: &NetworkParams) -> Self {
        Self::new(params.tensors().iter().map(|t| t.len()))
    }
}

/// One bias-corrected Adam update of every tensor in `params`.
pub fn adam_step(params: &mut [&mut Vec<f64>], grads: &[&[f64]], state: &mut AdamState, config: &AdamConfig) -> Result<()> {
    let shapes_ok = params.len() == grads.len()
        && params.len() == state.m.len()
        && params
            .iter()
            .zip(grads)
            .zip(&state.m)
            .all(|((p, g), m)| p.len() == g.len() && p.len() == m.len());
    if !shapes_ok {
        return Err(Error::ShapeMismatch("optimizer state, parameters and gradients differ".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.len() {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub rotation_train: RotationMode,
    pub rotation_test: RotationMode,
    /// Evaluate on the test split every this many epochs; 0 evaluates only
    /// after the last epoch.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
            rotation_train: RotationMode::AroundZ,
            rotation_test: RotationMode::AroundZ,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
        }
        if self.adam.learning_rate.is_nan() || self.adam.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Result of evaluating a model on one split under one rotation mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub rotation_mode: RotationMode,
    pub seed: u64,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub mean_loss: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<usize>,
    pub degenerate_keypoints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub config: TrainConfig,
    pub network_seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub test: EvalMetrics,
    pub degenerate_keypoints: usize,
    pub loss_regression: bool,
}

impl Metrics {
    pub fn epoch_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    /// `epoch,loss,test_acc`, with an empty accuracy where none was measured.
    pub fn training_log_csv(&self) -> String {
        let mut out = String::from("epoch,loss,test_acc\n");
        for e in &self.epochs {
            let acc = e.test_accuracy.map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", e.epoch, e.loss, acc));
        }
        out
    }
}

const SMOOTHING_WINDOW: usize = 5;
const REGRESSION_TOLERANCE: f64 = 1e-3;

/// True when the moving-average loss rises by more than a small relative
/// tolerance at any epoch after the fifth.
pub fn loss_regression(losses: &[f64]) -> bool {
    if losses.len() <= SMOOTHING_WINDOW {
        return false;
    }
    let smoothed: Vec<f64> = losses
        .windows(SMOOTHING_WINDOW)
        .map(|w| w.iter().sum::<f64>() / SMOOTHING_WINDOW as f64)
        .collect();
    smoothed
        .windows(2)
        .any(|w| w[1] > w[0] * (1.0 + REGRESSION_TOLERANCE))
}

fn rotated(cloud: &PointCloud, mode: RotationMode, seed: u64, path: &[u64]) -> PointCloud {
    match mode {
        RotationMode::None => cloud.clone(),
        _ => apply_rotation(cloud, &sample_rotation(mode, &mut rng_for(seed, path))),
    }
}

fn label_of(cloud: &PointCloud, num_classes: usize) -> Result<usize> {
    match cloud.label {
        Some(l) if l < num_classes => Ok(l),
        Some(l) => Err(Error::InvalidArgument(format!("label {l} out of range"))),
        None => Err(Error::InvalidArgument("unlabeled sample".into())),
    }
}

const TAG_SHUFFLE: u64 = 0;
const TAG_TRAIN_ROTATION: u64 = 1;
const TAG_EVAL_ROTATION: u64 = 2;

/// Logits of every sample under `mode`, with the degenerate keypoint count.
pub fn sample_logits(network: &GcaNetwork, samples: &[PointCloud], mode: RotationMode, seed: u64) -> Result<Vec<(Vec<f64>, usize)>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let (pass, plan) = network.forward(&rotated(c, mode, seed, &[TAG_EVAL_ROTATION, i as u64]))?;
            Ok((pass.logits, plan.degenerate_count()))
        })
        .collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Accuracy, loss and confusion of `network` on `samples`.
pub fn evaluate_samples(
    network: &GcaNetwork,
    samples: &[PointCloud],
    mode: RotationMode,
    seed: u64,
) -> Result<EvalMetrics> {
    let k = network.config.num_classes;
    let results = sample_logits(network, samples, mode, seed)?;
    let mut confusion = vec![vec![0usize; k]; k];
    let mut predictions = Vec::with_capacity(samples.len());
    let mut loss = 0.0;
    let mut degenerate = 0;
    for (c, (logits, deg)) in samples.iter().zip(&results) {
        let label = label_of(c, k)?;
        let pred = argmax(logits);
        confusion[label][pred] += 1;
        predictions.push(pred);
        loss += cross_entropy(logits, label)?.0;
        degenerate += deg;
    }
    let total = samples.len();
    let correct = (0..k).map(|i| confusion[i][i]).sum();
    Ok(EvalMetrics {
        rotation_mode: mode,
        seed,
        correct,
        total,
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        mean_loss: if total == 0 { 0.0 } else { loss / total as f64 },
        confusion,
        predictions,
        degenerate_keypoints: degenerate,
    })
}

/// Evaluates on the test split.
pub fn evaluate(network: &GcaNetwork, dataset: &Dataset, mode: RotationMode, seed: u64) -> Result<EvalMetrics> {
    evaluate_samples(network, &dataset.test, mode, seed)
}

/// Trains with mini-batch Adam. Each epoch visits the training split in a
/// seeded shuffle and draws a fresh rotation per sample.
pub fn train(mut network: GcaNetwork, dataset: &Dataset, config: &TrainConfig) -> Result<(GcaNetwork, Metrics)> {
    config.validate()?;
    if dataset.num_classes() < 2 || dataset.train.is_empty() {
        return Err(Error::InvalidArgument("training needs at least two classes and one sample".into()));
    }
    if dataset.num_classes() != network.config.num_classes {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} classes, network {}",
            dataset.num_classes(),
            network.config.num_classes
        )));
    }
    let k = network.config.num_classes;
    let mut state = AdamState::for_params(&network.params);
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut degenerate = 0;
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng_for(config.seed, &[TAG_SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in order.chunks(config.batch_size) {
            let results: Vec<(f64, NetworkParams, Vec<f64>, usize)> = batch
                .par_iter()
                .map(|&idx| {
                    let cloud = &dataset.train[idx];
                    let label = label_of(cloud, k)?;
                    let sample = rotated(
                        cloud,
                        config.rotation_train,
                        config.seed,
                        &[TAG_TRAIN_ROTATION, epoch as u64, idx as u64],
                    );
                    let (pass, plan) = network.forward(&sample)?;
                    let (loss, dlogits) = cross_entropy(&pass.logits, label)?;
                    let grads = network.backward(&plan, &pass, &dlogits)?;
                    Ok((loss, grads, pass.logits, plan.degenerate_count()))
                })
                .collect::<Result<_>>()?;
            let mut total = network.params.zeros_like();
            for ((loss, grads, logits, deg), &idx) in results.iter().zip(batch) {
                total.add_assign(grads);
                loss_sum += loss;
                degenerate += deg;
                correct += usize::from(Some(argmax(logits)) == dataset.train[idx].label);
            }
            total.scale(1.0 / batch.len() as f64);
            let grads = total.tensors();
            adam_step(&mut network.params.tensors_mut(), &grads, &mut state, &config.adam)?;
        }
        let last = epoch + 1 == config.epochs;
        let test_accuracy = if !dataset.test.is_empty() && (last || (config.eval_every > 0 && (epoch + 1) % config.eval_every == 0)) {
            Some(evaluate(&network, dataset, config.rotation_test, config.seed)?.accuracy)
        } else {
            None
        };
        let n = dataset.train.len() as f64;
        epochs.push(EpochRecord {
            epoch: epoch + 1,
            loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            test_accuracy,
        });
    }
    let test = evaluate(&network, dataset, config.rotation_test, config.seed)?;
    let losses: Vec<f64> = epochs.iter().map(|e| e.loss).collect();
    let metrics = Metrics {
        config: config.clone(),
        network_seed: network.seed,
        loss_regression: loss_regression(&losses),
        epochs,
        degenerate_keypoints: degenerate,
        test,
    };
    Ok((network, metrics))
}
