use std::path::PathBuf;

use anyhow::Result;
use bcgp::config::{keys_help, RunConfig};
use bcgp::run::{self, PredictOptions};
use clap::{Args, Parser, Subcommand};

/// Bayesian composite Gaussian process emulator.
#[derive(Parser)]
#[command(version, about, after_help = keys_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sampler and write draws, acceptance rates, widths and a manifest.
    #[command(after_help = keys_help())]
    Fit(RunArgs),
    /// Predict from a fitted run directory.
    Predict(PredictArgs),
    /// Write the global/local/error decomposition from a fitted run.
    Decompose(PredictArgs),
    /// Fit, predict and score BCGP and kriging on a built-in function.
    #[command(after_help = keys_help())]
    Benchmark(BenchArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training CSV with columns x1..xd,y.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Built-in test function when no data is given (bjx | wingweight).
    #[arg(long)]
    function: Option<String>,
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "bcgp_run")]
    out: PathBuf,
    /// Predictive interval level.
    #[arg(long)]
    level: Option<f64>,
    /// Independent chains run concurrently.
    #[arg(long)]
    chains: Option<usize>,
    /// Drop the white-noise term.
    #[arg(long)]
    no_nugget: bool,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Suppress progress output.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Test function (bjx | wingweight); same as --function.
    name: Option<String>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct PredictArgs {
    /// Run directory written by `fit`.
    #[arg(long, default_value = "bcgp_run")]
    out: PathBuf,
    /// CSV of prediction inputs x1..xd; defaults to the run's points or grid.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Training CSV that must match the run's data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Predictive interval level; defaults to the run's level.
    #[arg(long)]
    level: Option<f64>,
    /// Prediction seed; defaults to the run seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        if let Some(p) = &self.config {
            c.apply_file(p)?;
        }
        for kv in &self.set {
            c.apply_override(kv)?;
        }
        if let Some(p) = &self.data {
            c.data = Some(p.clone());
        }
        if let Some(f) = &self.function {
            c.function = f.clone();
        }
        if let Some(s) = self.seed {
            c.chain.seed = s;
        }
        if let Some(l) = self.level {
            c.level = l;
        }
        if let Some(k) = self.chains {
            c.chains = k;
        }
        if self.no_nugget {
            c.hyper.include_nugget = false;
        }
        Ok(c)
    }
}

impl PredictArgs {
    fn options(&self) -> PredictOptions {
        PredictOptions { points: self.points.clone(), level: self.level, seed: self.seed, data: self.data.clone() }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Fit(a) => {
            let cfg = a.config()?;
            let f = run::fit(&cfg, &a.out, a.quiet)?;
            println!("{} (manifest {})", a.out.display(), f.manifest_hash);
        }
        Command::Predict(a) => println!("{}", run::predict(&a.out, &a.options())?.display()),
        Command::Decompose(a) => println!("{}", run::decompose(&a.out, &a.options())?.display()),
        Command::Benchmark(b) => {
            let mut cfg = b.run.config()?;
            if let Some(n) = b.name {
                cfg.function = n;
            }
            let r = run::benchmark(&cfg, &b.run.out, b.run.quiet)?;
            for row in &r.rows {
                println!("{},{},{}", row.method, row.rmspe, row.reference);
            }
        }
    }
    Ok(())
}
