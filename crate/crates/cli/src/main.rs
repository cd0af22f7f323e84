use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ribbon_core::bench::{bench_gradient, write_timings};
use ribbon_core::driver::{run, RunOptions};
use ribbon_core::dynamics::KineticMode;
use ribbon_core::kinematics::GradientMethod;
use ribbon_core::presets::{preset, NAMES};
use ribbon_core::scene::SceneConfig;

#[derive(Parser)]
#[command(name = "ribbon", version, about = "Developable ribbon simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scene file (or `preset:NAME`), writing OBJ frames and metrics.csv.
    Run {
        scene: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, value_enum)]
        kinetic: Option<Kinetic>,
        #[arg(long, value_enum)]
        grad: Option<Grad>,
    },
    /// Time the adjoint and chain-rule gradients; CSV on stdout.
    BenchGrad {
        #[arg(long, value_delimiter = ',', default_value = "50,100,200,400")]
        sizes: Vec<usize>,
        /// Minimum timing budget per size and method, in milliseconds.
        #[arg(long, default_value_t = 200)]
        budget_ms: u64,
    },
    /// List the built-in scenes (the default), or print one as TOML.
    Presets {
        #[arg(long)]
        list: bool,
        /// Print this preset's scene file.
        #[arg(long)]
        show: Option<String>,
    },
    /// Parse and check a scene file.
    Validate { scene: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kinetic {
    Full,
    Lumped,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grad {
    Adjoint,
    Chain,
}

fn load(scene: &str) -> Result<SceneConfig> {
    if let Some(name) = scene.strip_prefix("preset:") {
        return Ok(preset(name)?);
    }
    SceneConfig::load(scene).with_context(|| format!("loading {scene}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scene, out, frames, h, threads, kinetic, grad } => {
            let config = load(&scene)?;
            if threads == Some(0) {
                bail!("--threads must be at least 1");
            }
            let options = RunOptions {
                out: out.or_else(|| config.output.is_none().then(|| PathBuf::from("out"))),
                frames,
                h,
                threads,
                kinetic: kinetic.map(|k| match k {
                    Kinetic::Full => KineticMode::Full,
                    Kinetic::Lumped => KineticMode::Lumped,
                }),
                gradient: grad.map(|g| match g {
                    Grad::Adjoint => GradientMethod::Adjoint,
                    Grad::Chain => GradientMethod::ChainRule,
                }),
            };
            let summary = run(&config, &options)?;
            let unconverged: usize = summary.rows.iter().map(|r| r.unconverged_units).sum();
            let opt: f64 = summary.rows.iter().map(|r| r.optimize_seconds).sum();
            let coll: f64 = summary.rows.iter().map(|r| r.collision_seconds).sum();
            let frames = summary.rows.len().max(1) as f64;
            let inner: usize = summary.rows.iter().map(|r| r.inner).sum();
            let outer: usize = summary.rows.iter().map(|r| r.outer).sum();
            println!(
                "{} frames in {:.2}s to {}; per frame opt {:.4}s coll {:.4}s inner/outer {:.1}/{:.1}; unconverged solves {}",
                summary.rows.len(),
                summary.wall_seconds,
                summary.out.map(|p| p.display().to_string()).unwrap_or_default(),
                opt / frames,
                coll / frames,
                inner as f64 / frames,
                outer as f64 / frames,
                unconverged
            );
        }
        Command::BenchGrad { sizes, budget_ms } => {
            if sizes.is_empty() {
                bail!("--sizes needs at least one value");
            }
            let timings = bench_gradient(&sizes, Duration::from_millis(budget_ms))?;
            write_timings(std::io::stdout().lock(), &timings)?;
        }
        Command::Presets { show, .. } => match show {
            Some(name) => print!("{}", preset(&name)?.to_toml()?),
            None => {
                for name in NAMES {
                    println!("{name}");
                }
            }
        },
        Command::Validate { scene } => {
            let config = load(&scene)?;
            let sim = config.build()?;
            println!(
                "ok: {} ribbons, {} constraints, {} independent units, {} frames at h = {}",
                config.ribbons.len(),
                config.constraints.len(),
                sim.units().len(),
                config.frames,
                config.h
            );
        }
    }
    Ok(())
}
