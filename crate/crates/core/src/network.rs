//! Multi-layer classifier: stacked convolution layers with farthest point
//! downsampling, a global max pool and a dense head.
//!
//! The geometric part of a forward pass (keypoints, frames, anchors,
//! neighbourhoods, relations) does not depend on the parameters, so it is
//! built once per cloud as a [`GeometryPlan`] and can be reused.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchor::{make_anchors, AnchorSet};
use crate::conv::{
    conv_backward_into, conv_forward, initial_features, KeypointContext, KeypointInput, LayerActivation, LayerConfig, LayerParams,
    INITIAL_FEATURES,
};
use crate::geometry::{farthest_point_sampling, knn};
use crate::learner::cross_entropy;
use crate::lrf::{build_lrf, Lrf};
use crate::pcio::PointCloud;
use crate::seed::rng_for;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub layers: Vec<LayerConfig>,
    pub head_hidden: Vec<usize>,
    pub num_classes: usize,
    /// Bin anchors over the input cloud at every layer instead of the
    /// layer's own point set.
    #[serde(default)]
    pub anchors_from_input: bool,
}

/// Ablation switches applied to every layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub weighted_lrf: bool,
    pub use_o_vector: bool,
    pub use_anchors: bool,
    pub anchor_count: usize,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            weighted_lrf: true,
            use_o_vector: true,
            use_anchors: true,
            anchor_count: 8,
        }
    }
}

impl ArchConfig {
    /// Layers with the given keypoint and channel counts, all using `k` neighbours.
    pub fn custom(keypoints: &[usize], channels: &[usize], k: usize, head: &[usize], num_classes: usize, ab: Ablation) -> Self {
        let mut c_in = INITIAL_FEATURES;
        let layers = keypoints
            .iter()
            .zip(channels)
            .map(|(&m, &c_out)| {
                let layer = LayerConfig {
                    keypoints_out: m,
                    k_neighbors: k,
                    anchor_count: ab.anchor_count,
                    c_in,
                    c_out,
                    weighted_lrf: ab.weighted_lrf,
                    use_o_vector: ab.use_o_vector,
                    use_anchors: ab.use_anchors,
                };
                c_in = c_out;
                layer
            })
            .collect();
        Self {
            layers,
            head_hidden: head.to_vec(),
            num_classes,
            anchors_from_input: false,
        }
    }

    /// Channels 16/32/64 at 64/32/16 keypoints, 32 neighbours, head (32).
    pub fn toy(num_classes: usize, ablation: Ablation) -> Self {
        Self::custom(&[64, 32, 16], &[16, 32, 64], 32, &[32], num_classes, ablation)
    }

    /// Channels 128/256/512 at 512/128/32 keypoints, 32 neighbours, head (256, 128).
    pub fn full(num_classes: usize, ablation: Ablation) -> Self {
        Self::custom(&[512, 128, 32], &[128, 256, 512], 32, &[256, 128], num_classes, ablation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument("network needs at least two classes".into()));
        }
        let mut c_in = INITIAL_FEATURES;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            if layer.c_in != c_in {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} expects {} input channels, previous layer gives {c_in}",
                    layer.c_in
                )));
            }
            c_in = layer.c_out;
        }
        if self.head_hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden sizes must be positive".into()));
        }
        Ok(())
    }

    /// Smallest cloud the network accepts.
    pub fn min_points(&self) -> usize {
        self.layers[0].keypoints_out
    }

    fn head_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers.last().map_or(0, |l| l.c_out)];
        dims.extend(&self.head_hidden);
        dims.push(self.num_classes);
        dims
    }
}

/// Fully connected layer; `weight` is `in_dim × out_dim` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.weight[i * self.out_dim..(i + 1) * self.out_dim];
            for (yo, w) in y.iter_mut().zip(row) {
                *yo += w * xi;
            }
        }
        y
    }
}

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
    pub head: Vec<Dense>,
}

impl NetworkParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(LayerParams::zeros_like).collect(),
            head: self.head.iter().map(|d| Dense::zeros(d.in_dim, d.out_dim)).collect(),
        }
    }

    /// Every tensor in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.extend(l.tensors());
        }
        for d in &self.head {
            out.push(&d.weight);
            out.push(&d.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.extend(l.tensors_mut());
        }
        for d in &mut self.head {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out
    }

    /// Names matching [`NetworkParams::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.layers.len() {
            for t in ["kernel", "kernel_bias", "lift", "lift_bias"] {
                out.push(format!("layer{i}.{t}"));
            }
        }
        for i in 0..self.head.len() {
            out.push(format!("head{i}.weight"));
            out.push(format!("head{i}.bias"));
        }
        out
    }

    pub fn add_assign(&mut self, other: &NetworkParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Geometry of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGeometry {
    /// Keypoint indices into the layer's input points.
    pub keypoints: Vec<usize>,
    /// Keypoint coordinates: the next layer's input points.
    pub points: Vec<Vec3>,
    pub frames: Vec<Lrf>,
    pub anchors: Vec<AnchorSet>,
    /// Per keypoint, neighbour indices into the layer's input points.
    pub neighbors: Vec<Vec<usize>>,
    /// Per keypoint, `K × A × 4` relation rows.
    pub relations: Vec<Vec<f64>>,
    /// Per keypoint: the frame was degenerate and replaced by the identity.
    pub identity_fallback: Vec<bool>,
    pub degenerate: usize,
    pub o_fallback: usize,
}

/// Parameter-independent part of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryPlan {
    pub layers: Vec<LayerGeometry>,
    /// First-layer neighbour features `(x', ‖x'‖)` per keypoint.
    pub first_features: Vec<Vec<f64>>,
}

impl GeometryPlan {
    pub fn degenerate_count(&self) -> usize {
        self.layers.iter().map(|l| l.degenerate).sum()
    }

    pub fn o_fallback_count(&self) -> usize {
        self.layers.iter().map(|l| l.o_fallback).sum()
    }
}

struct KeypointGeometry {
    frame: Lrf,
    degenerate: bool,
    anchors: AnchorSet,
    neighbors: Vec<usize>,
    local: Vec<Vec3>,
    relations: Vec<f64>,
}

fn keypoint_geometry(
    layer: &LayerConfig,
    points: &[Vec3],
    q_points: &[Vec3],
    bin_points: &[Vec3],
    p: Vec3,
) -> Result<KeypointGeometry> {
    let k = layer.k_neighbors.min(points.len());
    let hood = knn(points, &p, k)?;
    let lrf_config = layer.lrf_config();
    let frame = if layer.weighted_lrf {
        build_lrf(q_points, &p, lrf_config)
    } else {
        let local: Vec<Vec3> = hood.neighbor_indices.iter().map(|&j| points[j]).collect();
        build_lrf(&local, &p, lrf_config)
    };
    let degenerate = frame.degenerate;
    let frame = if degenerate { Lrf::identity_at(p) } else { frame };
    let anchors = if layer.use_anchors {
        make_anchors(bin_points, &frame, layer.anchor_count)?
    } else {
        AnchorSet::origin_only()
    };
    let neighbor_pts: Vec<Vec3> = hood.neighbor_indices.iter().map(|&j| points[j]).collect();
    let ctx = KeypointContext::new(frame, anchors, &neighbor_pts);
    Ok(KeypointGeometry {
        frame: ctx.frame,
        degenerate,
        anchors: ctx.anchors,
        neighbors: hood.neighbor_indices,
        local: ctx.local_coords,
        relations: ctx.relations,
    })
}

/// Samples keypoints and builds frames, anchors and relations for every layer.
pub fn build_geometry(config: &ArchConfig, cloud: &[Vec3]) -> Result<GeometryPlan> {
    config.validate()?;
    let mut points: Vec<Vec3> = cloud.to_vec();
    let mut layers = Vec::with_capacity(config.layers.len());
    let mut first_features = Vec::new();
    for (li, layer) in config.layers.iter().enumerate() {
        if layer.keypoints_out > points.len() {
            return Err(Error::InvalidArgument(format!(
                "layer {li} wants {} keypoints from {} points",
                layer.keypoints_out,
                points.len()
            )));
        }
        let keypoints = farthest_point_sampling(&points, layer.keypoints_out)?.indices;
        let kp_points: Vec<Vec3> = keypoints.iter().map(|&i| points[i]).collect();
        let bin_points: &[Vec3] = if config.anchors_from_input { cloud } else { &points };
        let per_kp: Vec<KeypointGeometry> = kp_points
            .par_iter()
            .map(|&p| keypoint_geometry(layer, &points, &kp_points, bin_points, p))
            .collect::<Result<_>>()?;
        if li == 0 {
            first_features = per_kp.iter().map(|g| initial_features(&g.local)).collect();
        }
        let mut geo = LayerGeometry {
            keypoints,
            points: kp_points,
            frames: Vec::with_capacity(per_kp.len()),
            anchors: Vec::with_capacity(per_kp.len()),
            neighbors: Vec::with_capacity(per_kp.len()),
            relations: Vec::with_capacity(per_kp.len()),
            identity_fallback: Vec::with_capacity(per_kp.len()),
            degenerate: 0,
            o_fallback: 0,
        };
        for g in per_kp {
            geo.degenerate += usize::from(g.degenerate);
            geo.identity_fallback.push(g.degenerate);
            geo.o_fallback += usize::from(g.frame.o_fallback_used);
            geo.frames.push(g.frame);
            geo.anchors.push(g.anchors);
            geo.neighbors.push(g.neighbors);
            geo.relations.push(g.relations);
        }
        points = geo.points.clone();
        layers.push(geo);
    }
    Ok(GeometryPlan { layers, first_features })
}

/// Cached quantities of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: Vec<f64>,
    /// Per layer: per keypoint output features, `M × C_out` row-major.
    pub layer_outputs: Vec<Vec<f64>>,
    layer_inputs: Vec<Vec<Vec<f64>>>,
    activations: Vec<Vec<LayerActivation>>,
    pool_argmax: Vec<usize>,
    /// Inputs to each head layer, then the logits.
    head_inputs: Vec<Vec<f64>>,
}

/// Parameters plus architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct GcaNetwork {
    pub config: ArchConfig,
    pub params: NetworkParams,
    pub seed: u64,
}

impl GcaNetwork {
    /// Glorot-uniform weights and zero biases, drawn from `seed`.
    pub fn new(config: ArchConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| LayerParams::init(l, &mut rng_for(seed, &[0, i as u64])))
            .collect();
        let dims = config.head_dims();
        let head = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let mut rng = rng_for(seed, &[1, i as u64]);
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let mut d = Dense::zeros(w[0], w[1]);
                for v in &mut d.weight {
                    *v = rand::Rng::random_range(&mut rng, -limit..=limit);
                }
                d
            })
            .collect();
        Ok(Self {
            config,
            params: NetworkParams { layers, head },
            seed,
        })
    }

    pub fn forward(&self, cloud: &PointCloud) -> Result<(ForwardPass, GeometryPlan)> {
        let plan = build_geometry(&self.config, cloud.points())?;
        let pass = self.forward_plan(&plan)?;
        Ok((pass, plan))
    }

    pub fn logits(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        Ok(self.forward(cloud)?.0.logits)
    }

    pub fn forward_plan(&self, plan: &GeometryPlan) -> Result<ForwardPass> {
        if plan.layers.len() != self.params.layers.len() {
            return Err(Error::ShapeMismatch("plan was built for a different architecture".into()));
        }
        let mut prev: Vec<f64> = Vec::new();
        let mut layer_outputs = Vec::with_capacity(plan.layers.len());
        let mut layer_inputs = Vec::with_capacity(plan.layers.len());
        let mut activations = Vec::with_capacity(plan.layers.len());
        for (li, (geo, params)) in plan.layers.iter().zip(&self.params.layers).enumerate() {
            let c_in = params.c_in;
            let inputs: Vec<Vec<f64>> = if li == 0 {
                plan.first_features.clone()
            } else {
                geo.neighbors
                    .iter()
                    .map(|nb| nb.iter().flat_map(|&j| prev[j * c_in..(j + 1) * c_in].iter().copied()).collect())
                    .collect()
            };
            let results: Vec<(Vec<f64>, LayerActivation)> = inputs
                .par_iter()
                .zip(&geo.relations)
                .map(|(f, r)| {
                    conv_forward(
                        params,
                        KeypointInput {
                            relations: r,
                            features: f,
                        },
                    )
                })
                .collect::<Result<_>>()?;
            let mut out = Vec::with_capacity(results.len() * params.c_out);
            let mut acts = Vec::with_capacity(results.len());
            for (o, a) in results {
                out.extend(o);
                acts.push(a);
            }
            prev = out.clone();
            layer_outputs.push(out);
            layer_inputs.push(inputs);
            activations.push(acts);
        }

        let c_last = self.params.layers.last().map_or(0, |l| l.c_out);
        let m = prev.len() / c_last;
        let mut pooled = vec![f64::NEG_INFINITY; c_last];
        let mut pool_argmax = vec![0usize; c_last];
        for i in 0..m {
            for c in 0..c_last {
                let v = prev[i * c_last + c];
                if i == 0 || v > pooled[c] {
                    pooled[c] = v;
                    pool_argmax[c] = i;
                }
            }
        }

        let mut head_inputs = vec![pooled];
        let n_head = self.params.head.len();
        for (i, d) in self.params.head.iter().enumerate() {
            let mut y = d.apply(head_inputs.last().expect("non-empty"));
            if i + 1 < n_head {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            head_inputs.push(y);
        }
        let logits = head_inputs.pop().expect("head output");
        Ok(ForwardPass {
            logits,
            layer_outputs,
            layer_inputs,
            activations,
            pool_argmax,
            head_inputs,
        })
    }

    /// Gradient of `dlogits · logits` with respect to every parameter.
    pub fn backward(&self, plan: &GeometryPlan, pass: &ForwardPass, dlogits: &[f64]) -> Result<NetworkParams> {
        let mut grads = self.params.zeros_like();
        self.backward_into(plan, pass, dlogits, &mut grads)?;
        Ok(grads)
    }

    /// Accumulating form of [`GcaNetwork::backward`].
    pub fn backward_into(
        &self,
        plan: &GeometryPlan,
        pass: &ForwardPass,
        dlogits: &[f64],
        grads: &mut NetworkParams,
    ) -> Result<()> {
        if dlogits.len() != self.config.num_classes {
            return Err(Error::ShapeMismatch(format!(
                "logit gradient has {} entries, expected {}",
                dlogits.len(),
                self.config.num_classes
            )));
        }
        if pass.activations.len() != self.params.layers.len() || pass.head_inputs.len() != self.params.head.len() {
            return Err(Error::ShapeMismatch("forward pass does not match this network".into()));
        }

        let mut dy = dlogits.to_vec();
        for (i, d) in self.params.head.iter().enumerate().rev() {
            let x = &pass.head_inputs[i];
            let g = &mut grads.head[i];
            for (gb, v) in g.bias.iter_mut().zip(&dy) {
                *gb += v;
            }
            let mut dx = vec![0.0; d.in_dim];
            for (ii, &xi) in x.iter().enumerate() {
                let row = &d.weight[ii * d.out_dim..(ii + 1) * d.out_dim];
                let grow = &mut g.weight[ii * d.out_dim..(ii + 1) * d.out_dim];
                let mut acc = 0.0;
                for o in 0..d.out_dim {
                    grow[o] += xi * dy[o];
                    acc += row[o] * dy[o];
                }
                dx[ii] = acc;
            }
            if i > 0 {
                // Hidden inputs came out of a ReLU.
                for (v, &xi) in dx.iter_mut().zip(x) {
                    if xi <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            dy = dx;
        }

        let n_layers = self.params.layers.len();
        let c_last = self.params.layers[n_layers - 1].c_out;
        let m_last = plan.layers[n_layers - 1].keypoints.len();
        let mut dout = vec![0.0; m_last * c_last];
        for (c, &i) in pass.pool_argmax.iter().enumerate() {
            dout[i * c_last + c] += dy[c];
        }

        for li in (0..n_layers).rev() {
            let params = &self.params.layers[li];
            let geo = &plan.layers[li];
            let (c_in, c_out) = (params.c_in, params.c_out);
            let n_in = if li == 0 { 0 } else { plan.layers[li - 1].keypoints.len() };
            let mut din = vec![0.0; n_in * c_in];
            let mut fg = Vec::new();
            for (i, act) in pass.activations[li].iter().enumerate() {
                let up = &dout[i * c_out..(i + 1) * c_out];
                if up.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let input = KeypointInput {
                    relations: &geo.relations[i],
                    features: &pass.layer_inputs[li][i],
                };
                if li == 0 {
                    conv_backward_into(params, act, input, up, &mut grads.layers[li], None)?;
                } else {
                    fg.clear();
                    fg.resize(geo.neighbors[i].len() * c_in, 0.0);
                    conv_backward_into(params, act, input, up, &mut grads.layers[li], Some(&mut fg))?;
                    for (jj, &j) in geo.neighbors[i].iter().enumerate() {
                        for c in 0..c_in {
                            din[j * c_in + c] += fg[jj * c_in + c];
                        }
                    }
                }
            }
            dout = din;
        }
        Ok(())
    }

    /// Cross-entropy loss of `cloud` against `label` and its gradient.
    pub fn loss_and_grad(&self, cloud: &PointCloud, label: usize) -> Result<(f64, NetworkParams, Vec<f64>)> {
        let (pass, plan) = self.forward(cloud)?;
        let (loss, dlogits) = cross_entropy(&pass.logits, label)?;
        let grads = self.backward(&plan, &pass, &dlogits)?;
        Ok((loss, grads, pass.logits))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&NetworkFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text)?;
        file.into_network()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    /// `[c_in][4][A]`
    kernel: Vec<Vec<Vec<f64>>>,
    kernel_bias: Vec<f64>,
    /// `[c_in][c_out]`
    lift: Vec<Vec<f64>>,
    lift_bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DenseFile {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HeadFile {
    hidden: Vec<usize>,
    layers: Vec<DenseFile>,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    config: ArchConfig,
    layers: Vec<LayerFile>,
    head: HeadFile,
    seed: u64,
}

fn nest(flat: &[f64], cols: usize) -> Vec<Vec<f64>> {
    flat.chunks(cols.max(1)).map(<[f64]>::to_vec).collect()
}

fn flatten(rows: Vec<Vec<f64>>, n_rows: usize, cols: usize, what: &str) -> Result<Vec<f64>> {
    if rows.len() != n_rows || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::ShapeMismatch(format!("{what} must be {n_rows} x {cols}")));
    }
    Ok(rows.into_iter().flatten().collect())
}

impl From<&GcaNetwork> for NetworkFile {
    fn from(net: &GcaNetwork) -> Self {
        let layers = net
            .params
            .layers
            .iter()
            .map(|p| LayerFile {
                kernel: nest(&p.kernel, 4 * p.rows).iter().map(|c| nest(c, p.rows)).collect(),
                kernel_bias: p.kernel_bias.clone(),
                lift: nest(&p.lift, p.c_out),
                lift_bias: p.lift_bias.clone(),
            })
            .collect();
        let head = HeadFile {
            hidden: net.config.head_hidden.clone(),
            layers: net
                .params
                .head
                .iter()
                .map(|d| DenseFile {
                    weight: nest(&d.weight, d.out_dim),
                    bias: d.bias.clone(),
                })
                .collect(),
        };
        Self {
            config: net.config.clone(),
            layers,
            head,
            seed: net.seed,
        }
    }
}

impl NetworkFile {
    fn into_network(self) -> Result<GcaNetwork> {
        let mut net = GcaNetwork::new(self.config, self.seed)?;
        if self.layers.len() != net.params.layers.len() || self.head.layers.len() != net.params.head.len() {
            return Err(Error::ShapeMismatch("layer count differs from config".into()));
        }
        if self.head.hidden != net.config.head_hidden {
            return Err(Error::ShapeMismatch("head sizes differ from config".into()));
        }
        for (p, f) in net.params.layers.iter_mut().zip(self.layers) {
            let (c_in, rows) = (p.c_in, p.rows);
            if f.kernel.len() != c_in {
                return Err(Error::ShapeMismatch(format!("kernel must have {c_in} channels")));
            }
            let mut kernel = Vec::with_capacity(p.kernel.len());
            for c in f.kernel {
                kernel.extend(flatten(c, 4, rows, "kernel slice")?);
            }
            p.kernel = kernel;
            p.lift = flatten(f.lift, c_in, p.c_out, "lift")?;
            if f.kernel_bias.len() != c_in || f.lift_bias.len() != p.c_out {
                return Err(Error::ShapeMismatch("bias length".into()));
            }
            p.kernel_bias = f.kernel_bias;
            p.lift_bias = f.lift_bias;
        }
        for (d, f) in net.params.head.iter_mut().zip(self.head.layers) {
            d.weight = flatten(f.weight, d.in_dim, d.out_dim, "head weight")?;
            if f.bias.len() != d.out_dim {
                return Err(Error::ShapeMismatch("head bias length".into()));
            }
            d.bias = f.bias;
        }
        if !net.params.is_finite() {
            return Err(Error::NonFiniteValue("network weights".into()));
        }
        Ok(net)
    }
}
