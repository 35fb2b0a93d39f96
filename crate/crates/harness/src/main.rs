use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::parser::ValueSource;
use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};
use gca_harness::commands::{
    self, AblationArgs, ExtractArgs, GenShapesArgs, GradCheckArgs, InvarianceArgs, LrfBenchArgs, ProtocolArgs,
    RunContext,
};
use gca_harness::{ExperimentConfig, RunReport};
use serde::{Deserialize, Serialize};

/// Environment variable that overrides --threads.
const THREADS_ENV: &str = "GCA_THREADS";

#[derive(Debug, Parser)]
#[command(name = "gca", version, about = "Rotation-invariant point cloud convolution experiments")]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory; the only place a run writes to.
    #[arg(long, global = true, default_value = "gca-out")]
    out: PathBuf,
    /// Worker threads (default: all cores; GCA_THREADS overrides).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config from an earlier run; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "kebab-case")]
enum Command {
    /// Write the synthetic five-class dataset and its manifest.
    GenShapes(GenShapesArgs),
    /// Dump keypoint features, frames and anchors of one cloud.
    Extract(ExtractArgs),
    /// Compare logits of random clouds before and after rotation.
    InvarianceCheck(InvarianceArgs),
    /// Compare analytic gradients with central differences.
    GradCheck(GradCheckArgs),
    /// Frame repeatability benchmark under subsampling and noise.
    LrfBench(LrfBenchArgs),
    /// Train and test under the z/z, SO3/SO3 and z/SO3 protocols.
    ProtocolEval(ProtocolArgs),
    /// Anchor-count or component ablation over several seeds.
    Ablation(AblationArgs),
}

fn explicit(m: &ArgMatches, id: &str) -> bool {
    matches!(m.value_source(id), Some(ValueSource::CommandLine | ValueSource::EnvVariable))
}

/// Command-line values win; anything left at its default is taken from
/// the config file.
fn merge(cli: &Cli, matches: &ArgMatches, file: Option<ExperimentConfig>) -> anyhow::Result<(Command, u64, Option<usize>)> {
    let Some(file) = file else {
        let cmd = cli.command.clone().context("no subcommand given")?;
        return Ok((cmd, cli.seed, cli.threads));
    };
    let seed = if explicit(matches, "seed") { cli.seed } else { file.seed };
    let threads = if explicit(matches, "threads") { cli.threads } else { file.threads };
    let args = match (&cli.command, matches.subcommand()) {
        (Some(cmd), Some((name, sub))) => {
            if name != file.command {
                anyhow::bail!("config is for {:?} but the command line asks for {name:?}", file.command);
            }
            let mut value = serde_json::to_value(cmd)?;
            let cli_args = value["args"].as_object_mut().context("subcommand arguments")?;
            if let Some(file_args) = file.args.as_object() {
                for (k, v) in file_args {
                    if !explicit(sub, k) {
                        cli_args.insert(k.clone(), v.clone());
                    }
                }
            }
            value["args"].take()
        }
        _ => file.args.clone(),
    };
    let cmd: Command = serde_json::from_value(serde_json::json!({"command": file.command, "args": args}))
        .context("config arguments do not match the command")?;
    Ok((cmd, seed, threads))
}

fn run(cmd: &Command, ctx: &RunContext) -> anyhow::Result<RunReport> {
    match cmd {
        Command::GenShapes(a) => commands::gen_shapes(a, ctx),
        Command::Extract(a) => commands::extract(a, ctx),
        Command::InvarianceCheck(a) => commands::invariance_check(a, ctx),
        Command::GradCheck(a) => commands::grad_check(a, ctx),
        Command::LrfBench(a) => commands::lrf_bench(a, ctx),
        Command::ProtocolEval(a) => commands::protocol_eval(a, ctx),
        Command::Ablation(a) => commands::ablation(a, ctx),
    }
}

fn main_inner() -> anyhow::Result<bool> {
    let matches = Cli::command().get_matches();
    let cli = Cli::from_arg_matches(&matches)?;
    let file = cli.config.as_deref().map(ExperimentConfig::read).transpose()?;
    let (cmd, seed, threads) = merge(&cli, &matches, file)?;

    let env_threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = env_threads.or(threads).filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }

    let value = serde_json::to_value(&cmd)?;
    let config = ExperimentConfig {
        command: value["command"].as_str().unwrap_or_default().to_string(),
        seed,
        out: cli.out.clone(),
        threads,
        args: value["args"].clone(),
    };
    config.write(&cli.out)?;
    let ctx = RunContext { seed, out: cli.out.clone() };
    let mut report = run(&cmd, &ctx)?;
    report.config_hash = config.hash();
    report.write(&cli.out)?;
    if report.passed {
        println!("{}: PASS ({:.1}s)", report.experiment, report.wall_clock_secs);
    } else {
        println!("{}: FAIL", report.experiment);
        for f in &report.failures {
            println!("  {f}");
        }
    }
    Ok(report.passed)
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
