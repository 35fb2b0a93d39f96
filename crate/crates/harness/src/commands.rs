//! Subcommand implementations. Every command writes only under
//! [`RunContext::out`] and returns a [`RunReport`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::Args;
use gca_core::geometry::apply_rotation;
use gca_core::learner::{evaluate, train, AdamConfig, Metrics, TrainConfig};
use gca_core::lrf::{repeatability_experiment, RepeatabilityConfig};
use gca_core::lrf::LrfConfig;
use gca_core::network::{build_geometry, Ablation, ArchConfig, GcaNetwork};
use gca_core::pcio::{
    benchmark_model, load_cloud, sample_rotation, toy_suite, BenchmarkModel, CloudFormat, Dataset, DatasetManifest,
    PointCloud, RotationMode, ToySuiteConfig,
};
use gca_core::seed::{derive_seed, rng_for};
use gca_core::Vec3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::gradcheck::{self, TensorCheck};
use crate::report::RunReport;

/// Global settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub seed: u64,
    pub out: PathBuf,
}

impl RunContext {
    fn write(&self, report: &mut RunReport, name: &str, contents: &str) -> anyhow::Result<()> {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        report.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&self, report: &mut RunReport, name: &str, value: &T) -> anyhow::Result<()> {
        self.write(report, name, &serde_json::to_string_pretty(value)?)
    }
}

fn finish(mut report: RunReport, started: Instant) -> RunReport {
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    report
}

// ---------------------------------------------------------------------------
// Dataset arguments shared by the training commands.

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DatasetArgs {
    /// Read the dataset from a manifest directory instead of generating it.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub per_class_train: usize,
    #[arg(long, default_value_t = 40)]
    pub per_class_test: usize,
    #[arg(long, default_value_t = 256)]
    pub points: usize,
    #[arg(long, default_value_t = 0.01)]
    pub jitter: f64,
}

impl Default for DatasetArgs {
    fn default() -> Self {
        Self {
            dataset: None,
            per_class_train: 100,
            per_class_test: 40,
            points: 256,
            jitter: 0.01,
        }
    }
}

impl DatasetArgs {
    fn suite_config(&self, seed: u64) -> ToySuiteConfig {
        ToySuiteConfig {
            per_class_train: self.per_class_train,
            per_class_test: self.per_class_test,
            points: self.points,
            jitter: self.jitter,
            seed,
        }
    }

    fn load(&self, seed: u64) -> anyhow::Result<Dataset> {
        match &self.dataset {
            Some(dir) => {
                let manifest = DatasetManifest::read(&dir.join(DatasetManifest::FILE_NAME))?;
                Ok(manifest.load_dataset(dir)?)
            }
            None => Ok(toy_suite(&self.suite_config(seed))?),
        }
    }
}

/// Optimisation settings shared by the training commands.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Evaluate every N epochs (0: only at the end).
    #[arg(long, default_value_t = 0)]
    pub eval_every: usize,
    /// Architecture: toy or full.
    #[arg(long, default_value = "toy")]
    pub arch: String,
}

impl Default for TrainArgs {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            learning_rate: 1e-3,
            eval_every: 0,
            arch: "toy".into(),
        }
    }
}

impl TrainArgs {
    fn train_config(&self, seed: u64, train: RotationMode, test: RotationMode) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            seed,
            rotation_train: train,
            rotation_test: test,
            eval_every: self.eval_every,
        }
    }
}

fn arch_config(name: &str, num_classes: usize, ablation: Ablation) -> anyhow::Result<ArchConfig> {
    match name {
        "toy" => Ok(ArchConfig::toy(num_classes, ablation)),
        "full" => Ok(ArchConfig::full(num_classes, ablation)),
        other => bail!("unknown architecture {other:?}, expected toy or full"),
    }
}

fn parse_mode(s: &str) -> anyhow::Result<RotationMode> {
    s.parse().map_err(|e| anyhow::anyhow!("{e}"))
}

fn random_cloud(seed: u64, n: usize) -> anyhow::Result<PointCloud> {
    let mut rng = rng_for(seed, &[]);
    let pts = (0..n)
        .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    Ok(PointCloud::new(pts)?)
}

// ---------------------------------------------------------------------------
// gen-shapes

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenShapesArgs {
    #[arg(long, default_value_t = 100)]
    pub per_class_train: usize,
    #[arg(long, default_value_t = 40)]
    pub per_class_test: usize,
    #[arg(long, default_value_t = 256)]
    pub points: usize,
    #[arg(long, default_value_t = 0.01)]
    pub jitter: f64,
}

pub fn gen_shapes(args: &GenShapesArgs, ctx: &RunContext) -> anyhow::Result<RunReport> {
    let started = Instant::now();
    let data_args = DatasetArgs {
        dataset: None,
        per_class_train: args.per_class_train,
        per_class_test: args.per_class_test,
        points: args.points,
        jitter: args.jitter,
    };
    let cfg = data_args.suite_config(ctx.seed);
    let dataset = toy_suite(&cfg)?;
    let manifest = DatasetManifest::write(&ctx.out, &dataset, &cfg)?;
    let mut report = RunReport::new("gen-shapes");
    report.outputs.push(DatasetManifest::FILE_NAME.into());
    report.metrics = json!({
        "classes": dataset.class_names,
        "train": dataset.train.len(),
        "test": dataset.test.len(),
        "files": manifest.entries.len(),
    });
    Ok(finish(report, started))
}

// ---------------------------------------------------------------------------
// extract

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ExtractArgs {
    /// Point cloud file (.xyz, .off or .ply).
    #[arg(long)]
    pub input: PathBuf,
    /// Override the format inferred from the extension.
    #[arg(long)]
    pub format: Option<String>,
    /// Trained weights; random weights from --seed otherwise.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value = "toy")]
    pub arch: String,
    #[arg(long, default_value_t = 5)]
    pub num_classes: usize,
    /// Rotate the input before extraction: none, z or so3.
    #[arg(long, default_value = "none")]
    pub rotation: String,
    /// Also write anchors.csv.
    #[arg(long)]
    pub dump_anchors: bool,
}

pub fn extract(args: &ExtractArgs, ctx: &RunContext) -> anyhow::Result<RunReport> {
    let started = Instant::now();
    let format = match &args.format {
        Some(f) => f.parse::<CloudFormat>().map_err(|e| anyhow::anyhow!("{e}"))?,
        None => CloudFormat::from_path(&args.input)
            .with_context(|| format!("cannot infer format of {}", args.input.display()))?,
    };
    let mut cloud = load_cloud(&args.input, format)?;
    let mode = parse_mode(&args.rotation)?;
    if mode != RotationMode::None {
        cloud = apply_rotation(&cloud, &sample_rotation(mode, &mut rng_for(ctx.seed, &[0xE7])));
    }
    let net = match &args.weights {
        Some(path) => GcaNetwork::load(path)?,
        None => GcaNetwork::new(arch_config(&args.arch, args.num_classes, Ablation::default())?, ctx.seed)?,
    };
    let plan = build_geometry(&net.config, cloud.points())?;
    let pass = net.forward_plan(&plan)?;
    let mut report = RunReport::new("extract");

    let last = plan.layers.last().expect("at least one layer");
    let c = net.config.layers.last().expect("at least one layer").c_out;
    let features = pass.layer_outputs.last().expect("at least one layer");
    let mut csv = String::from("keypoint,x,y,z");
    for i in 0..c {
        write!(csv, ",f{i}")?;
    }
    csv.push('\n');
    for (i, p) in last.points.iter().enumerate() {
        write!(csv, "{i},{},{},{}", p.x, p.y, p.z)?;
        for v in &features[i * c..(i + 1) * c] {
            write!(csv, ",{v}")?;
        }
        csv.push('\n');
    }
    ctx.write(&mut report, "features.csv", &csv)?;

    let mut lrfs = String::from(
        "layer,keypoint,ox,oy,oz,e1x,e1y,e1z,e2x,e2y,e2z,e3x,e3y,e3z,lambda1,lambda2,lambda3,degenerate,o_fallback\n",
    );
    for (li, layer) in plan.layers.iter().enumerate() {
        for (i, f) in layer.frames.iter().enumerate() {
            write!(lrfs, "{li},{i},{},{},{}", f.origin.x, f.origin.y, f.origin.z)?;
            for a in 0..3 {
                let e = f.axis(a);
                write!(lrfs, ",{},{},{}", e.x, e.y, e.z)?;
            }
            let [l1, l2, l3] = f.eigenvalues;
            let degenerate = u8::from(layer.identity_fallback[i]);
            writeln!(lrfs, ",{l1},{l2},{l3},{degenerate},{}", u8::from(f.o_fallback_used))?;
        }
    }
    ctx.write(&mut report, "lrfs.csv", &lrfs)?;

    if args.dump_anchors {
        let mut anchors = String::from("layer,keypoint,anchor,ax,ay,az,occupancy\n");
        for (li, layer) in plan.layers.iter().enumerate() {
            for (i, set) in layer.anchors.iter().enumerate() {
                for (k, (a, n)) in set.anchors_local.iter().zip(&set.occupancy).enumerate() {
                    writeln!(anchors, "{li},{i},{k},{},{},{},{n}", a.x, a.y, a.z)?;
                }
            }
        }
        ctx.write(&mut report, "anchors.csv", &anchors)?;
    }

    report.degenerate_lrf_count = plan.degenerate_count();
    report.metrics = json!({
        "points": cloud.len(),
        "keypoints": plan.layers.iter().map(|l| l.keypoints.len()).collect::<Vec<_>>(),
        "o_fallback_count": plan.o_fallback_count(),
        "logits": pass.logits,
    });
    Ok(finish(report, started))
}

// ---------------------------------------------------------------------------
// invariance-check

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct InvarianceArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 256)]
    pub points: usize,
    /// Rotation applied in each trial: none, z or so3.
    #[arg(long, default_value = "so3")]
    pub rotation: String,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceTrial {
    pub trial: usize,
    pub max_abs_diff: f64,
    pub degenerate: usize,
    pub o_fallback: usize,
}

pub fn invariance_check(args: &InvarianceArgs, ctx: &RunContext) -> anyhow::Result<RunReport> {
    let started = Instant::now();
    let mode = parse_mode(&args.rotation)?;
    let mut trials = Vec::with_capacity(args.trials);
    for t in 0..args.trials {
        let ts = derive_seed(ctx.seed, &[t as u64]);
        let cloud = random_cloud(derive_seed(ts, &[0]), args.points)?;
        let net = GcaNetwork::new(ArchConfig::toy(5, Ablation::default()), derive_seed(ts, &[1]))?;
        let r = sample_rotation(mode, &mut rng_for(ts, &[2]));
        let plan_a = build_geometry(&net.config, cloud.points())?;
        let rotated = apply_rotation(&cloud, &r);
        let plan_b = build_geometry(&net.config, rotated.points())?;
        let a = net.forward_plan(&plan_a)?.logits;
        let b = net.forward_plan(&plan_b)?.logits;
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        trials.push(InvarianceTrial {
            trial: t,
            max_abs_diff: diff,
            degenerate: plan_a.degenerate_count() + plan_b.degenerate_count(),
            o_fallback: plan_a.o_fallback_count() + plan_b.o_fallback_count(),
        });
    }
    let mut report = RunReport::new("invariance-check");
    let max = trials.iter().map(|t| t.max_abs_diff).fold(0.0, f64::max);
    let degenerate: usize = trials.iter().map(|t| t.degenerate).sum();
    report.degenerate_lrf_count = degenerate;
    report.check(max <= args.tolerance, format!("max logit difference {max:e} exceeds {:e}", args.tolerance));
    report.check(degenerate == 0, format!("{degenerate} degenerate keypoints"));
    let mut csv = String::from("trial,max_abs_diff,degenerate,o_fallback\n");
    for t in &trials {
        writeln!(csv, "{},{:e},{},{}", t.trial, t.max_abs_diff, t.degenerate, t.o_fallback)?;
    }
    ctx.write(&mut report, "invariance.csv", &csv)?;
    report.metrics = json!({
        "trials": trials,
        "max_abs_diff": max,
        "tolerance": args.tolerance,
    });
    Ok(finish(report, started))
}

// ---------------------------------------------------------------------------
// grad-check

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GradCheckArgs {
    /// Random instances per suite.
    #[arg(long, default_value_t = 3)]
    pub instances: usize,
}

pub fn grad_check(args: &GradCheckArgs, ctx: &RunContext) -> anyhow::Result<RunReport> {
    let started = Instant::now();
    let mut checks: Vec<TensorCheck> = gradcheck::conv_suite(ctx.seed, args.instances)?;
    checks.extend(gradcheck::network_suite(ctx.seed, args.instances)?);
    let zero_ok = gradcheck::zero_upstream_check(ctx.seed)?;
    let mut report = RunReport::new("grad-check");
    for c in checks.iter().filter(|c| !c.passed()) {
        report.check(
            false,
            format!("{} instance {} {}: relative error {:e}", c.suite, c.instance, c.tensor, c.relative_error),
        );
    }
    report.check(zero_ok, "zero upstream gradient gave non-zero parameter gradients");
    let mut csv = String::from("suite,instance,tensor,len,relative_error\n");
    for c in &checks {
        writeln!(csv, "{},{},{},{},{:e}", c.suite, c.instance, c.tensor, c.len, c.relative_error)?;
    }
    ctx.write(&mut report, "gradcheck.csv", &csv)?;
    let worst = checks.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    report.metrics = json!({
        "step": gradcheck::STEP,
        "tolerance": gradcheck::TOLERANCE,
        "max_relative_error": worst,
        "zero_upstream_ok": zero_ok,
        "checks": checks,
    });
    Ok(finish(report, started))
}

// ---------------------------------------------------------------------------
// lrf-bench

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct LrfBenchArgs {
    /// Model files; the three synthetic bumpy models when omitted.
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    /// Points per synthetic model.
    #[arg(long, default_value_t = 2000)]
    pub model_points: usize,
    #[arg(long, default_value_t = 0.5)]
    pub subsample_ratio: f64,
    /// Noise sigma as a multiple of the mean nearest-neighbour distance.
    #[arg(long, default_value_t = 0.1)]
    pub noise_factor: f64,
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    /// Neighbourhood size of the unweighted frames.
    #[arg(long, default_value_t = 32)]
    pub k_neighbors: usize,
    /// Required relative improvement of weighted over unweighted frames.
    #[arg(long, default_value_t = 0.1)]
    pub margin: f64,
}

/// The three frame variants compared by the benchmark.
pub const LRF_VARIANTS: [(&str, LrfConfig); 3] = [
    (
        "weighted_o",
        LrfConfig {
            weighted: true,
            use_o_vector: true,
        },
    ),
    (
        "unweighted_o",
        LrfConfig {
            weighted: false,
            use_o_vector: true,
        },
    ),
    (
        "unweighted_no_o",
        LrfConfig {
            weighted: false,
            use_o_vector: false,
        },
    ),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrfBenchRow {
    pub input: String,
    pub variant: String,
    pub mean_error_deg: f64,
    pub pairs: usize,
    pub degenerate: usize,
    pub mesh_resolution: f64,
}

fn bench_inputs(args: &LrfBenchArgs, seed: u64) -> anyhow::Result<Vec<(String, PointCloud)>> {
    if args.inputs.is_empty() {
        return BenchmarkModel::ALL
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let cloud = benchmark_model(*m, args.model_points, derive_seed(seed, &[0xB0, i as u64]))?;
                Ok((m.name().to_string(), cloud))
            })
            .collect();
    }
    args.inputs
        .iter()
        .map(|p| {
            let format = CloudFormat::from_path(p).with_context(|| format!("cannot infer format of {}", p.display()))?;
            let name = p.file_stem().map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned());
            Ok((name, load_cloud(p, format)?))
        })
        .collect()
}

pub fn lrf_bench(args: &LrfBenchArgs, ctx: &RunContext) -> anyhow::Result<RunReport> {
    let started = Instant::now();
    let mut report = RunReport::new("lrf-bench");
    let mut rows = Vec::new();
    for (name, cloud) in bench_inputs(args, ctx.seed)? {
        let mut means = BTreeMap::new();
        for (variant, lrf) in LRF_VARIANTS {
            let cfg = RepeatabilityConfig {
                subsample_ratio: args.subsample_ratio,
                noise_sigma_factor: args.noise_factor,
                n_pairs: args.pairs,
                seed: ctx.seed,
                k_neighbors: args.k_neighbors,
                lrf,
            };
            let r = repeatability_experiment(&cloud, &cfg)?;
            ctx.write(&mut report, &format!("hist_{name}_{variant}.csv"), &r.histogram.to_csv())?;
            report.degenerate_lrf_count += r.degenerate_count;
            means.insert(variant, r.mean_error_deg);
            rows.push(LrfBenchRow {
                input: name.clone(),
                variant: variant.into(),
                mean_error_deg: r.mean_error_deg,
                pairs: r.pairs,
                degenerate: r.degenerate_count,
                mesh_resolution: r.mesh_resolution,
            });
        }
        let (w, u) = (means["weighted_o"], means["unweighted_o"]);
        report.check(
            w < u * (1.0 - args.margin),
            format!("{name}: weighted mean {w:.3} deg not {:.0}% below unweighted {u:.3} deg", args.margin * 100.0),
        );
    }
    let mut csv = String::from("input,variant,mean_error_deg,pairs,degenerate\n");
    for r in &rows {
        writeln!(csv, "{},{},{},{},{}", r.input, r.variant, r.mean_error_deg, r.pairs, r.degenerate)?;
    }
    ctx.write(&mut report, "summary.csv", &csv)?;
    report.metrics = json!({ "rows": rows });
    Ok(finish(report, started))
}

// ---------------------------------------------------------------------------
// protocol-eval

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ProtocolArgs {
    /// Training rotation of the headline protocol.
    #[arg(long, default_value = "z")]
    pub train_mode: String,
    /// Test rotation of the headline protocol.
    #[arg(long, default_value = "so3")]
    pub test_mode: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 0.90)]
    pub min_accuracy: f64,
    #[arg(long, default_value_t = 0.02)]
    pub max_gap: f64,
    #[arg(long, default_value_t = 0.01)]
    pub max_std: f64,
}

impl Default for ProtocolArgs {
    fn default() -> Self {
        Self {
            train_mode: "z".into(),
            test_mode: "so3".into(),
            data: DatasetArgs::default(),
            train: TrainArgs::default(),
            min_accuracy: 0.90,
            max_gap: 0.02,
            max_std: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub train: RotationMode,
    pub test: RotationMode,
    pub accuracy: f64,
}

/// Population standard deviation.
pub fn population_std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn train_one(
    dataset: &Dataset,
    train_args: &TrainArgs,
    ablation: Ablation,
    net_seed: u64,
    train_seed: u64,
    train_mode: RotationMode,
    test_mode: RotationMode,
) -> anyhow::Result<(GcaNetwork, Metrics)> {
    let net = GcaNetwork::new(arch_config(&train_args.arch, dataset.num_classes(), ablation)?, net_seed)?;
    let cfg = train_args.train_config(train_seed, train_mode, test_mode);
    Ok(train(net, dataset, &cfg)?)
}

pub fn protocol_eval(args: &ProtocolArgs, ctx: &RunContext) -> anyhow::Result<RunReport> {
    let started = Instant::now();
    let headline = (parse_mode(&args.train_mode)?, parse_mode(&args.test_mode)?);
    let dataset = args.data.load(ctx.seed)?;
    let protocols = [
        (RotationMode::AroundZ, RotationMode::AroundZ),
        (RotationMode::SO3, RotationMode::SO3),
        (RotationMode::AroundZ, RotationMode::SO3),
    ];
    let mut train_modes = vec![RotationMode::AroundZ, RotationMode::SO3];
    if !train_modes.contains(&headline.0) {
        train_modes.push(headline.0);
    }
    let eval_seed = derive_seed(ctx.seed, &[0xE0]);
    let mut report = RunReport::new("protocol-eval");
    let mut results: Vec<ProtocolResult> = Vec::new();
    let mut agreement = BTreeMap::new();
    for &mode in &train_modes {
        let (net, metrics) = train_one(
            &dataset,
            &args.train,
            Ablation::default(),
            derive_seed(ctx.seed, &[0x4E7]),
            derive_seed(ctx.seed, &[0x7A1]),
            mode,
            mode,
        )?;
        report.degenerate_lrf_count += metrics.degenerate_keypoints;
        ctx.write(&mut report, &format!("model_{mode}.json"), &net.to_json()?)?;
        ctx.write_json(&mut report, &format!("metrics_{mode}.json"), &metrics)?;
        ctx.write(&mut report, &format!("log_{mode}.csv"), &metrics.training_log_csv())?;
        let mut evals = BTreeMap::new();
        for test in [RotationMode::None, RotationMode::AroundZ, RotationMode::SO3] {
            let m = evaluate(&net, &dataset, test, eval_seed)?;
            report.degenerate_lrf_count += m.degenerate_keypoints;
            if protocols.contains(&(mode, test)) || (mode, test) == headline {
                results.push(ProtocolResult {
                    train: mode,
                    test,
                    accuracy: m.accuracy,
                });
            }
            evals.insert(test.to_string(), m);
        }
        // Per-sample agreement between unrotated and arbitrarily rotated test data.
        let same = evals["none"]
            .predictions
            .iter()
            .zip(&evals["so3"].predictions)
            .filter(|(a, b)| a == b)
            .count();
        agreement.insert(mode.to_string(), json!({"agree": same, "total": dataset.test.len()}));
        ctx.write_json(&mut report, &format!("eval_{mode}.json"), &evals)?;
    }
    let acc = |t: RotationMode, s: RotationMode| {
        results
            .iter()
            .find(|r| r.train == t && r.test == s)
            .map(|r| r.accuracy)
            .expect("protocol evaluated")
    };
    let triple: Vec<f64> = protocols.iter().map(|&(t, s)| acc(t, s)).collect();
    let std = population_std(&triple);
    let gap = (triple[0] - triple[2]).abs();
    report.check(
        triple[0] >= args.min_accuracy,
        format!("z/z accuracy {:.4} below {}", triple[0], args.min_accuracy),
    );
    report.check(gap <= args.max_gap, format!("z/z vs z/so3 gap {gap:.4} above {}", args.max_gap));
    report.check(std <= args.max_std, format!("protocol std {std:.4} above {}", args.max_std));

    let mut csv = String::from("protocol,train,test,accuracy\n");
    for r in &results {
        writeln!(csv, "{}/{},{},{},{}", r.train, r.test, r.train, r.test, r.accuracy)?;
    }
    ctx.write(&mut report, "protocols.csv", &csv)?;
    report.metrics = json!({
        "z_z": triple[0],
        "so3_so3": triple[1],
        "z_so3": triple[2],
        "headline": {"train": headline.0, "test": headline.1, "accuracy": acc(headline.0, headline.1)},
        "protocol_std": std,
        "z_gap": gap,
        "prediction_agreement_none_vs_so3": agreement,
        "results": results,
    });
    Ok(finish(report, started))
}

// ---------------------------------------------------------------------------
// ablation

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AblationArgs {
    /// anchors (1/2/4/8 anchors) or toggles (full, no-weight, no-weight-no-o, no-anchor).
    #[arg(long, default_value = "anchors")]
    pub sweep: String,
    /// Explicit settings, overriding the sweep's default list.
    #[arg(long, value_delimiter = ',')]
    pub settings: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub seeds: usize,
    #[arg(long, default_value = "z")]
    pub train_mode: String,
    #[arg(long, default_value = "so3")]
    pub test_mode: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainArgs,
}

impl Default for AblationArgs {
    fn default() -> Self {
        Self {
            sweep: "anchors".into(),
            settings: Vec::new(),
            seeds: 3,
            train_mode: "z".into(),
            test_mode: "so3".into(),
            data: DatasetArgs::default(),
            train: TrainArgs::default(),
        }
    }
}

/// Ablation switches of a named setting. `full` and `anchors-8` coincide.
pub fn ablation_setting(name: &str) -> anyhow::Result<Ablation> {
    let full = Ablation::default();
    Ok(match name {
        "full" | "anchors-8" => full,
        "anchors-1" => Ablation { anchor_count: 1, ..full },
        "anchors-2" => Ablation { anchor_count: 2, ..full },
        "anchors-4" => Ablation { anchor_count: 4, ..full },
        "no-weight" => Ablation {
            weighted_lrf: false,
            ..full
        },
        "no-weight-no-o" => Ablation {
            weighted_lrf: false,
            use_o_vector: false,
            ..full
        },
        "no-anchor" => Ablation {
            use_anchors: false,
            ..full
        },
        other => bail!("unknown ablation setting {other:?}"),
    })
}

fn sweep_settings(sweep: &str) -> anyhow::Result<Vec<String>> {
    let names: &[&str] = match sweep {
        "anchors" => &["anchors-1", "anchors-2", "anchors-4", "anchors-8"],
        "toggles" => &["full", "no-weight", "no-weight-no-o", "no-anchor"],
        other => bail!("unknown sweep {other:?}, expected anchors or toggles"),
    };
    Ok(names.iter().map(|s| s.to_string()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub setting: String,
    pub seed_index: usize,
    pub accuracy: f64,
    pub final_loss: f64,
}

pub fn ablation(args: &AblationArgs, ctx: &RunContext) -> anyhow::Result<RunReport> {
    let started = Instant::now();
    let settings = if args.settings.is_empty() {
        sweep_settings(&args.sweep)?
    } else {
        args.settings.clone()
    };
    let ablations: Vec<Ablation> = settings.iter().map(|s| ablation_setting(s)).collect::<anyhow::Result<_>>()?;
    if args.seeds == 0 {
        bail!("at least one seed is required");
    }
    let (train_mode, test_mode) = (parse_mode(&args.train_mode)?, parse_mode(&args.test_mode)?);
    let dataset = args.data.load(ctx.seed)?;
    let mut report = RunReport::new("ablation");
    let mut runs = Vec::new();
    for (name, ab) in settings.iter().zip(&ablations) {
        for s in 0..args.seeds {
            let (_, metrics) = train_one(
                &dataset,
                &args.train,
                *ab,
                derive_seed(ctx.seed, &[0xAB, s as u64, 0]),
                derive_seed(ctx.seed, &[0xAB, s as u64, 1]),
                train_mode,
                test_mode,
            )?;
            report.degenerate_lrf_count += metrics.degenerate_keypoints + metrics.test.degenerate_keypoints;
            runs.push(AblationRun {
                setting: name.clone(),
                seed_index: s,
                accuracy: metrics.test.accuracy,
                final_loss: metrics.epochs.last().map_or(f64::NAN, |e| e.loss),
            });
        }
    }
    let mut means: Vec<(String, f64)> = Vec::new();
    for name in &settings {
        let accs: Vec<f64> = runs.iter().filter(|r| &r.setting == name).map(|r| r.accuracy).collect();
        means.push((name.clone(), accs.iter().sum::<f64>() / accs.len() as f64));
    }
    let mean_of = |names: &[&str]| means.iter().find(|(n, _)| names.contains(&n.as_str())).map(|(_, m)| *m);
    if let (Some(a8), Some(a1)) = (mean_of(&["anchors-8", "full"]), mean_of(&["anchors-1"])) {
        report.check(a8 >= a1, format!("8 anchors ({a8:.4}) below 1 anchor ({a1:.4})"));
    }
    if let (Some(full), Some(none)) = (mean_of(&["full", "anchors-8"]), mean_of(&["no-anchor"])) {
        report.check(full >= none, format!("full model ({full:.4}) below no-anchor model ({none:.4})"));
    }

    let mut csv = String::from("setting,seed,accuracy,final_loss\n");
    for r in &runs {
        writeln!(csv, "{},{},{},{}", r.setting, r.seed_index, r.accuracy, r.final_loss)?;
    }
    ctx.write(&mut report, "ablation_runs.csv", &csv)?;
    let mut summary = String::from("setting,mean_accuracy\n");
    for (n, m) in &means {
        writeln!(summary, "{n},{m}")?;
    }
    ctx.write(&mut report, "ablation_summary.csv", &summary)?;
    report.metrics = json!({
        "train_mode": train_mode,
        "test_mode": test_mode,
        "runs": runs,
        "mean_accuracy": means.iter().cloned().collect::<BTreeMap<_, _>>(),
    });
    Ok(finish(report, started))
}
