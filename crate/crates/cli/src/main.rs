use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use upscale_cli::config::{RunConfig, Stage};
use upscale_cli::pipeline::{run_pipeline, run_sweep};

#[derive(Parser)]
#[command(
    name = "upscale",
    version,
    about = "Periodic-cell upscaling of reactive transport in porous media"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the unit cell and dump it.
    Mesh(Common),
    /// Solve the cell flow.
    Flow(Common),
    /// Principal direct and adjoint eigenpairs.
    Spectral(Common),
    /// Full closure: eigenpairs, drift, corrector and effective coefficients.
    Closure(Common),
    /// Closure plus the one-dimensional macro profile.
    Upscale(Common),
    /// Everything, including the resolved chain comparison.
    Dns(Common),
    /// Parallel, resumable sweep over the configured grid and stages.
    Sweep(Common),
    /// Parse and check a configuration, then print its hash.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Cells per unit length, overriding the configuration.
    #[arg(long)]
    resolution: Option<usize>,
}

fn load(c: &Common, last: Option<Stage>) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &c.out {
        cfg.output.dir = o.clone();
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(r) = c.resolution {
        cfg.geometry.resolution = r;
    }
    if let Some(last) = last {
        cfg.stages = Stage::ORDER
            .iter()
            .copied()
            .take_while(|s| *s <= last)
            .collect();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(c: &Common, last: Stage, name: &str) -> Result<()> {
    let cfg = load(c, Some(last))?;
    let s = run_pipeline(&cfg, &cfg.output.dir, name)?;
    for r in &s.rows {
        match (r.lambda, r.velocity, r.dispersion) {
            (Some(l), Some(v), Some(d)) => println!(
                "Pe={} Da={} mu={} lambda={l:.6e} V=({:.6e}, {:.6e}) D=[[{:.6e}, {:.6e}], [{:.6e}, {:.6e}]]",
                r.peclet, r.damkohler, r.mu, v[0], v[1], d[0][0], d[0][1], d[1][0], d[1][1]
            ),
            (Some(l), _, _) => println!("Pe={} Da={} mu={} lambda={l:.6e}", r.peclet, r.damkohler, r.mu),
            _ => {}
        }
    }
    for (i, d) in &s.dns {
        println!(
            "point {i}: max relative error {:.3e}, mean {:.3e}, log slope {:.6e} vs decay root {:.6e}",
            d.error.max_relative, d.error.mean_relative, d.dns_slope, d.macro_root
        );
    }
    println!("wrote {}", cfg.output.dir.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Mesh(c) => run(&c, Stage::Mesh, "mesh"),
        Command::Flow(c) => run(&c, Stage::Flow, "flow"),
        Command::Spectral(c) => run(&c, Stage::Spectral, "spectral"),
        Command::Closure(c) => run(&c, Stage::Closure, "closure"),
        Command::Upscale(c) => run(&c, Stage::Macro, "upscale"),
        Command::Dns(c) => run(&c, Stage::Dns, "dns"),
        Command::Sweep(c) => {
            let cfg = load(&c, None)?;
            let s = run_sweep(&cfg, &cfg.output.dir, cfg.workers)?;
            println!(
                "{} rows, {} failures, wrote {}",
                s.rows.len(),
                s.failures.len(),
                cfg.output.dir.display()
            );
            for (i, e) in &s.failures {
                eprintln!("point {i}: {e}");
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = RunConfig::load(&config)?;
            println!("{} points, hash {}", cfg.grid().len(), cfg.hash()?);
            Ok(())
        }
    }
}
