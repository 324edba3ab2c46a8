//! `viewfield`: run capture episodes, score poses against map snapshots,
//! evaluate novel views and benchmark renderability queries.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use viewfield_core::Vec3;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "viewfield", version, about = "Renderability-driven view planning on synthetic scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set planner.mode=pinhole`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; takes precedence over `output.dir`.
    #[arg(short, long, env = "VIEWFIELD_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one capture episode and write its trajectory, metrics, planner
    /// log and map snapshot.
    Run(Common),
    /// Score poses from a CSV file against a map snapshot.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        snapshot: PathBuf,
        /// CSV with columns x,y,z,dx,dy,dz and an optional id (or step).
        #[arg(long)]
        poses: PathBuf,
        /// Agent position for travel cost, `x,y,z`; defaults to the first pose.
        #[arg(long, value_parser = parse_point)]
        from: Option<Vec3>,
    },
    /// Evaluate a map snapshot on the axis-aligned test grid of its scene.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Measure batch query latency, per-keyframe cost and voxel state size.
    Bench(Common),
    /// Print lattice sizes, bin radii and FoV-set sizes.
    LatticeInfo(Common),
}

fn parse_point(s: &str) -> Result<Vec3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err("expected x,y,z".into()),
    }
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Common {
    fn load(&self) -> Result<(RunConfig, PathBuf), Failure> {
        let cfg = config::load(self.config.as_deref(), &self.overrides).map_err(Failure::Usage)?;
        let dir = self.output_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());
        Ok((cfg, dir))
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    let runtime = Failure::Runtime;
    match command {
        Command::Run(common) => {
            let (cfg, dir) = common.load()?;
            commands::prepare_dir(&dir).map_err(runtime)?;
            commands::run(&cfg, &dir).map_err(runtime)
        }
        Command::Score {
            common,
            snapshot,
            poses,
            from,
        } => {
            let (cfg, dir) = common.load()?;
            commands::prepare_dir(&dir).map_err(runtime)?;
            commands::score(&cfg, &dir, &snapshot, &poses, from)
                .map(|_| ())
                .map_err(runtime)
        }
        Command::Eval { common, snapshot } => {
            let (cfg, dir) = common.load()?;
            commands::prepare_dir(&dir).map_err(runtime)?;
            commands::eval(&cfg, &dir, &snapshot).map_err(runtime)
        }
        Command::Bench(common) => {
            let (cfg, dir) = common.load()?;
            commands::prepare_dir(&dir).map_err(runtime)?;
            commands::bench(&cfg, &dir).context("benchmark failed").map_err(runtime)
        }
        Command::LatticeInfo(common) => {
            let (cfg, _) = common.load()?;
            commands::lattice_info(&cfg).map_err(runtime)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
