//! The per-keypoint convolution.
//!
//! For neighbour `j` with relation matrix `hⱼ` (`A × 4`) and input feature
//! `fⱼ` (`C_in`), a kernel spanning all anchor rows produces modulation
//! weights
//!
//! ```text
//! wⱼ[c] = Σ_{r<4, k<A} kernel[c, r, k] · hⱼ[k, r] + kernel_bias[c]
//! ```
//!
//! The modulated features `wⱼ ⊙ fⱼ` are max-pooled over neighbours (ties go
//! to the lowest `j`) and lifted to `C_out` channels by a dense layer with
//! ReLU.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::anchor::{local_unchecked, relation_rows_into, AnchorSet, RELATION_WIDTH};
use crate::lrf::{Lrf, LrfConfig};
use crate::{Error, Result, Vec3};

/// Width of the first-layer point feature `(x', ‖x'‖)`.
pub const INITIAL_FEATURES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub keypoints_out: usize,
    pub k_neighbors: usize,
    pub anchor_count: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub weighted_lrf: bool,
    pub use_o_vector: bool,
    pub use_anchors: bool,
}

impl LayerConfig {
    /// Rows of the relation matrix: the anchor count, or a single row
    /// relative to the keypoint when anchors are disabled.
    pub fn relation_rows(&self) -> usize {
        if self.use_anchors {
            self.anchor_count
        } else {
            1
        }
    }

    pub fn lrf_config(&self) -> LrfConfig {
        LrfConfig {
            weighted: self.weighted_lrf,
            use_o_vector: self.use_o_vector,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.anchor_count, 1 | 2 | 4 | 8) {
            return Err(Error::InvalidArgument(format!(
                "anchor count must be 1, 2, 4 or 8, got {}",
                self.anchor_count
            )));
        }
        if self.keypoints_out == 0 || self.k_neighbors == 0 || self.c_in == 0 || self.c_out == 0 {
            return Err(Error::InvalidArgument("layer sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Trainable tensors of one layer, stored flat and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub c_in: usize,
    pub c_out: usize,
    pub rows: usize,
    /// Shape `(c_in, 4, rows)`.
    pub kernel: Vec<f64>,
    pub kernel_bias: Vec<f64>,
    /// Shape `(c_in, c_out)`.
    pub lift: Vec<f64>,
    pub lift_bias: Vec<f64>,
}

fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize, len: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-limit..=limit)).collect()
}

impl LayerParams {
    pub fn zeros(c_in: usize, c_out: usize, rows: usize) -> Self {
        Self {
            c_in,
            c_out,
            rows,
            kernel: vec![0.0; c_in * RELATION_WIDTH * rows],
            kernel_bias: vec![0.0; c_in],
            lift: vec![0.0; c_in * c_out],
            lift_bias: vec![0.0; c_out],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(config: &LayerConfig, rng: &mut R) -> Self {
        let rows = config.relation_rows();
        let (c_in, c_out) = (config.c_in, config.c_out);
        Self {
            kernel: glorot(rng, RELATION_WIDTH * rows, c_in, c_in * RELATION_WIDTH * rows),
            lift: glorot(rng, c_in, c_out, c_in * c_out),
            ..Self::zeros(c_in, c_out, rows)
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.c_in, self.c_out, self.rows)
    }

    #[inline]
    pub fn kernel_index(&self, c: usize, r: usize, k: usize) -> usize {
        (c * RELATION_WIDTH + r) * self.rows + k
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.kernel, &self.kernel_bias, &self.lift, &self.lift_bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.kernel, &mut self.kernel_bias, &mut self.lift, &mut self.lift_bias]
    }
}

/// `(x', ‖x'‖)` per local point, `K × 4` row-major.
pub fn initial_features(local_coords: &[Vec3]) -> Vec<f64> {
    local_coords
        .iter()
        .flat_map(|x| [x.x, x.y, x.z, x.norm()])
        .collect()
}

/// Inputs of one keypoint: relation matrices (`K × A × 4`) and neighbour
/// features (`K × C_in`), both row-major.
#[derive(Debug, Clone, Copy)]
pub struct KeypointInput<'a> {
    pub relations: &'a [f64],
    pub features: &'a [f64],
}

/// Owned relation buffer for one keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointContext {
    pub frame: Lrf,
    pub anchors: AnchorSet,
    pub local_coords: Vec<Vec3>,
    pub relations: Vec<f64>,
}

impl KeypointContext {
    /// Projects `neighbors` into `frame` and relates them to `anchors`.
    pub fn new(frame: Lrf, anchors: AnchorSet, neighbors: &[Vec3]) -> Self {
        let local_coords: Vec<Vec3> = neighbors.iter().map(|x| local_unchecked(x, &frame)).collect();
        let width = anchors.len() * RELATION_WIDTH;
        let mut relations = vec![0.0; local_coords.len() * width];
        for (x, out) in local_coords.iter().zip(relations.chunks_exact_mut(width)) {
            relation_rows_into(x, &anchors, out);
        }
        Self {
            frame,
            anchors,
            local_coords,
            relations,
        }
    }
}

/// Forward quantities needed by [`conv_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivation {
    k: usize,
    rows: usize,
    c_in: usize,
    c_out: usize,
    fingerprint: u64,
    /// Winning neighbour per input channel.
    pub argmax: Vec<usize>,
    w_at: Vec<f64>,
    f_at: Vec<f64>,
    pub pooled: Vec<f64>,
    /// Lift output before ReLU.
    pub pre_activation: Vec<f64>,
}

fn fingerprint(input: &KeypointInput<'_>) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01B3;
    input
        .relations
        .iter()
        .chain(input.features)
        .fold(0xCBF2_9CE4_8422_2325u64, |h, v| (h ^ v.to_bits()).wrapping_mul(PRIME))
}

fn neighbor_count(params: &LayerParams, input: &KeypointInput<'_>) -> Result<usize> {
    let width = params.rows * RELATION_WIDTH;
    if input.relations.is_empty() || !input.relations.len().is_multiple_of(width) {
        return Err(Error::ShapeMismatch(format!(
            "relations length {} is not a positive multiple of {width}",
            input.relations.len()
        )));
    }
    let k = input.relations.len() / width;
    if input.features.len() != k * params.c_in {
        return Err(Error::ShapeMismatch(format!(
            "features length {} != {k} neighbours x {} channels",
            input.features.len(),
            params.c_in
        )));
    }
    Ok(k)
}

/// Modulation weights `wⱼ` for every neighbour, `K × C_in`.
fn modulation_weights(params: &LayerParams, relations: &[f64], k: usize) -> Vec<f64> {
    let rows = params.rows;
    let width = rows * RELATION_WIDTH;
    let mut transposed = vec![0.0; width];
    let mut w = vec![0.0; k * params.c_in];
    for j in 0..k {
        let h = &relations[j * width..(j + 1) * width];
        // Reorder (anchor, channel) to (channel, anchor) to match the kernel layout.
        for a in 0..rows {
            for r in 0..RELATION_WIDTH {
                transposed[r * rows + a] = h[a * RELATION_WIDTH + r];
            }
        }
        for c in 0..params.c_in {
            let kern = &params.kernel[c * width..(c + 1) * width];
            let dot: f64 = kern.iter().zip(&transposed).map(|(a, b)| a * b).sum();
            w[j * params.c_in + c] = dot + params.kernel_bias[c];
        }
    }
    w
}

pub fn conv_forward(params: &LayerParams, input: KeypointInput<'_>) -> Result<(Vec<f64>, LayerActivation)> {
    let k = neighbor_count(params, &input)?;
    let c_in = params.c_in;
    let w = modulation_weights(params, input.relations, k);

    let mut argmax = vec![0usize; c_in];
    let mut pooled = vec![f64::NEG_INFINITY; c_in];
    for j in 0..k {
        for c in 0..c_in {
            let m = w[j * c_in + c] * input.features[j * c_in + c];
            if m > pooled[c] || j == 0 {
                pooled[c] = m;
                argmax[c] = j;
            }
        }
    }
    let w_at: Vec<f64> = (0..c_in).map(|c| w[argmax[c] * c_in + c]).collect();
    let f_at: Vec<f64> = (0..c_in).map(|c| input.features[argmax[c] * c_in + c]).collect();

    let mut pre = params.lift_bias.clone();
    for (c, &p) in pooled.iter().enumerate() {
        let row = &params.lift[c * params.c_out..(c + 1) * params.c_out];
        for (z, l) in pre.iter_mut().zip(row) {
            *z += l * p;
        }
    }
    let out = pre.iter().map(|&z| z.max(0.0)).collect();
    Ok((
        out,
        LayerActivation {
            k,
            rows: params.rows,
            c_in,
            c_out: params.c_out,
            fingerprint: fingerprint(&input),
            argmax,
            w_at,
            f_at,
            pooled,
            pre_activation: pre,
        },
    ))
}

/// Gradients of a scalar objective with respect to the layer parameters
/// (returned as a [`LayerParams`]) and the neighbour features (`K × C_in`),
/// given the objective's gradient `upstream` with respect to the output.
pub fn conv_backward(
    params: &LayerParams,
    activation: &LayerActivation,
    input: KeypointInput<'_>,
    upstream: &[f64],
) -> Result<(LayerParams, Vec<f64>)> {
    let mut grads = params.zeros_like();
    let mut feature_grads = vec![0.0; activation.k * params.c_in];
    conv_backward_into(params, activation, input, upstream, &mut grads, Some(&mut feature_grads))?;
    Ok((grads, feature_grads))
}

/// Like [`conv_backward`] but accumulates into `grads` and, if given,
/// `feature_grads`.
pub fn conv_backward_into(
    params: &LayerParams,
    activation: &LayerActivation,
    input: KeypointInput<'_>,
    upstream: &[f64],
    grads: &mut LayerParams,
    feature_grads: Option<&mut [f64]>,
) -> Result<()> {
    let k = neighbor_count(params, &input)?;
    if k != activation.k
        || params.rows != activation.rows
        || params.c_in != activation.c_in
        || params.c_out != activation.c_out
        || fingerprint(&input) != activation.fingerprint
    {
        return Err(Error::ShapeMismatch("activation does not match this input".into()));
    }
    if upstream.len() != params.c_out {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient has {} entries, expected {}",
            upstream.len(),
            params.c_out
        )));
    }
    if grads.c_in != params.c_in || grads.c_out != params.c_out || grads.rows != params.rows {
        return Err(Error::ShapeMismatch("gradient buffer shape".into()));
    }

    let (c_in, c_out, rows) = (params.c_in, params.c_out, params.rows);
    let width = rows * RELATION_WIDTH;
    // ReLU passes gradient only where the pre-activation is strictly positive.
    let dz: Vec<f64> = upstream
        .iter()
        .zip(&activation.pre_activation)
        .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
        .collect();
    for (gb, d) in grads.lift_bias.iter_mut().zip(&dz) {
        *gb += d;
    }

    let mut feature_grads = feature_grads;
    for c in 0..c_in {
        let lift_row = &params.lift[c * c_out..(c + 1) * c_out];
        let glift_row = &mut grads.lift[c * c_out..(c + 1) * c_out];
        let mut dpool = 0.0;
        for o in 0..c_out {
            glift_row[o] += activation.pooled[c] * dz[o];
            dpool += lift_row[o] * dz[o];
        }
        if dpool == 0.0 {
            continue;
        }
        let j = activation.argmax[c];
        let dw = dpool * activation.f_at[c];
        if let Some(fg) = feature_grads.as_deref_mut() {
            fg[j * c_in + c] += dpool * activation.w_at[c];
        }
        grads.kernel_bias[c] += dw;
        let h = &input.relations[j * width..(j + 1) * width];
        let gk = &mut grads.kernel[c * width..(c + 1) * width];
        for a in 0..rows {
            for r in 0..RELATION_WIDTH {
                gk[r * rows + a] += dw * h[a * RELATION_WIDTH + r];
            }
        }
    }
    Ok(())
}
