use std::path::Path;
use std::process::Command;

use gca_harness::{ExperimentConfig, RunReport};

fn gca(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gca"))
        .args(args)
        .env_remove("GCA_THREADS")
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> RunReport {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

const TINY_DATA: [&str; 6] = ["--per-class-train", "2", "--per-class-test", "1", "--points", "96"];

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(gca(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(gca(&["grad-check", "--bogus"]).status.code(), Some(2));
    assert_eq!(gca(&[]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(gca(&["--out", out, "extract", "--input", "/nonexistent.xyz"]).status.code(), Some(2));
}

#[test]
fn grad_check_writes_config_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = gca(&["--seed", "5", "--out", out, "grad-check", "--instances", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    let cfg = ExperimentConfig::read(&dir.path().join("config.json")).unwrap();
    assert_eq!(cfg.command, "grad-check");
    assert_eq!(cfg.seed, 5);
    let r = report(dir.path());
    assert!(r.passed);
    assert_eq!(r.config_hash, cfg.hash());
    let csv = read(dir.path(), "gradcheck.csv");
    assert!(csv.starts_with("suite,instance,tensor,len,relative_error\n"));
}

#[test]
fn config_replay_reproduces_the_report() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let a = first.path().to_str().unwrap();
    let b = second.path().to_str().unwrap();
    assert!(gca(&["--seed", "9", "--out", a, "invariance-check", "--trials", "2", "--points", "96"]).status.success());
    let cfg = first.path().join("config.json");
    assert!(gca(&["--config", cfg.to_str().unwrap(), "--out", b]).status.success());
    assert_eq!(report(first.path()).without_timing(), report(second.path()).without_timing());
    // An explicit flag overrides the file.
    let third = tempfile::tempdir().unwrap();
    let c = third.path().to_str().unwrap();
    assert!(gca(&["--config", cfg.to_str().unwrap(), "--out", c, "invariance-check", "--trials", "1"]).status.success());
    let replayed = ExperimentConfig::read(&third.path().join("config.json")).unwrap();
    assert_eq!(replayed.seed, 9);
    assert_eq!(replayed.args["trials"], 1);
    assert_eq!(replayed.args["points"], 96);
}

#[test]
fn invariance_check_pass_and_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = gca(&["--out", out, "invariance-check", "--trials", "3", "--points", "128", "--rotation", "none"]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(dir.path());
    assert_eq!(r.metrics["max_abs_diff"], 0.0);
    assert_eq!(r.metrics["trials"].as_array().unwrap().len(), 3);
    assert_eq!(read(dir.path(), "invariance.csv").lines().count(), 4);

    let o = gca(&["--out", out, "invariance-check", "--trials", "1", "--points", "128", "--tolerance=-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!report(dir.path()).passed);
}

#[test]
fn gen_shapes_then_extract() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let mut args = vec!["--out", data.to_str().unwrap(), "gen-shapes"];
    args.extend(TINY_DATA);
    assert!(gca(&args).status.success());
    assert!(data.join("manifest.json").exists());
    let cloud = data.join("train/torus_0006.xyz");
    assert!(cloud.exists());

    let plain = dir.path().join("plain");
    let turned = dir.path().join("turned");
    for (out, rot) in [(&plain, "none"), (&turned, "so3")] {
        let o = gca(&[
            "--out",
            out.to_str().unwrap(),
            "extract",
            "--input",
            cloud.to_str().unwrap(),
            "--rotation",
            rot,
            "--dump-anchors",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let features = |dir: &Path| -> Vec<Vec<f64>> {
        read(dir, "features.csv")
            .lines()
            .skip(1)
            .map(|l| l.split(',').skip(4).map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let (a, b) = (features(&plain), features(&turned));
    assert_eq!(a.len(), 16);
    assert_eq!(a[0].len(), 64);
    for (ra, rb) in a.iter().zip(&b) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() < 1e-9);
        }
    }
    assert_eq!(read(&plain, "lrfs.csv").lines().count(), 1 + 64 + 32 + 16);
    assert_eq!(read(&plain, "anchors.csv").lines().count(), 1 + (64 + 32 + 16) * 8);
}

#[test]
fn lrf_bench_without_perturbation_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = gca(&[
        "--out", out, "lrf-bench", "--model-points", "300", "--pairs", "100", "--noise-factor", "0",
        "--subsample-ratio", "1",
    ]);
    // Equal zero errors cannot show the required margin.
    assert_eq!(o.status.code(), Some(1));
    let r = report(dir.path());
    let hist: Vec<&String> = r.outputs.iter().filter(|f| f.starts_with("hist_")).collect();
    assert_eq!(hist.len(), 9);
    for h in hist {
        let text = read(dir.path(), h);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 19);
        assert_eq!(lines[0], "bin_start_deg,bin_end_deg,count,fraction");
        assert_eq!(lines[1], "0,10,100,1");
    }
    assert_eq!(read(dir.path(), "summary.csv").lines().count(), 10);
}

#[test]
fn lrf_bench_reads_files() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.xyz");
    let cloud = gca_core::pcio::benchmark_model(gca_core::pcio::BenchmarkModel::BumpyTorus, 400, 1).unwrap();
    gca_core::pcio::save_cloud(&model, &cloud, gca_core::pcio::CloudFormat::Xyz).unwrap();
    let out = dir.path().join("out");
    let o = gca(&["--out", out.to_str().unwrap(), "lrf-bench", "--input", model.to_str().unwrap(), "--pairs", "100"]);
    assert!(o.status.code().is_some_and(|c| c < 2));
    assert!(out.join("hist_m_weighted_o.csv").exists());
}

#[test]
fn short_protocol_eval_is_deterministic() {
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let mut args = vec!["--seed", "3", "--out", out, "protocol-eval", "--epochs", "1", "--batch-size", "5"];
        args.extend(TINY_DATA);
        let o = gca(&args);
        assert!(o.status.code().is_some_and(|c| c < 2));
        let r = report(dir.path());
        for f in ["protocols.csv", "model_z.json", "model_so3.json", "log_z.csv", "metrics_so3.json"] {
            assert!(r.outputs.iter().any(|o| o == f), "{f}");
        }
        assert!(read(dir.path(), "log_z.csv").starts_with("epoch,loss,test_acc\n"));
        runs.push(r.without_timing());
        drop(dir);
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn short_ablation_records_every_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec![
        "--out", out, "ablation", "--settings", "anchors-1,no-weight-no-o", "--seeds", "2", "--epochs", "1",
    ];
    args.extend(TINY_DATA);
    let o = gca(&args);
    assert!(o.status.code().is_some_and(|c| c < 2), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(dir.path(), "ablation_runs.csv").lines().count(), 5);
    assert_eq!(read(dir.path(), "ablation_summary.csv").lines().count(), 3);
    let bad = gca(&["--out", out, "ablation", "--settings", "anchors-3"]);
    assert_eq!(bad.status.code(), Some(2));
}
