use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use anoseqs_harness::pipeline::read_metrics;
use anoseqs_harness::plot::{self, Series};
use anoseqs_harness::{report, Algo, Pipeline, RunConfig, SweepParam};

#[derive(Parser)]
#[command(name = "anoseqs", version, about = "Anomaly-shaped TD3 experiments")]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set training.total_steps=5000`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Discard stage outputs whose config hash does not match.
    #[arg(long, global = true)]
    force: bool,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out the behaviour policy in the source environment.
    Collect,
    /// Cut safe state windows from the source trajectories.
    BuildDataset,
    /// Train the detector and calibrate the threshold.
    TrainDetector,
    TrainPolicy {
        #[arg(long)]
        algo: Algo,
        /// All configured seeds when omitted.
        #[arg(long)]
        seed: Option<u64>,
    },
    Evaluate {
        #[arg(long)]
        algo: Algo,
        #[arg(long)]
        seed: Option<u64>,
    },
    Sweep {
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
    /// Plot metrics CSVs given as `label=path`, or the configured run.
    Plot {
        #[arg(long, value_name = "LABEL=CSV")]
        input: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    RunAll,
    Report,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if !cli.overrides.is_empty() {
        config = config.with_overrides(&cli.overrides)?;
    }
    let mut p = Pipeline::new(config)?;
    p.force = cli.force;
    p.quiet = cli.quiet;
    let seeds = |s: Option<u64>| s.map_or_else(|| p.config.seeds.clone(), |s| vec![s]);

    match cli.command {
        Command::Collect => {
            let path = p.collect()?;
            println!("{}", path.display());
        }
        Command::BuildDataset => {
            let info = p.build_dataset()?;
            println!("train {} holdout {}", info.train, info.holdout);
        }
        Command::TrainDetector => {
            let info = p.train_detector()?;
            println!("theta {}", info.calibration.theta);
        }
        Command::TrainPolicy { algo, seed } => {
            for s in seeds(seed) {
                let run = p.train_policy(algo, s)?;
                println!(
                    "{} seed {} total_cost_rate {:.6}",
                    algo, s, run.total_cost_rate
                );
            }
        }
        Command::Evaluate { algo, seed } => {
            for s in seeds(seed) {
                let e = p.evaluate(algo, s)?;
                println!(
                    "{} seed {} episode_cost {:.4} episode_return {:.4}",
                    algo, s, e.summary.episode_cost.mean, e.summary.episode_return.mean
                );
            }
        }
        Command::Sweep { param, values } => {
            if values.is_empty() {
                bail!("--values is empty");
            }
            let points = p.sweep(param, &values)?;
            print!("{}", report::sweep_csv(param.as_str(), &points));
        }
        Command::Plot { input, out } => {
            if input.is_empty() {
                for path in p.plot()? {
                    println!("{}", path.display());
                }
            } else {
                let mut series = Vec::new();
                for spec in &input {
                    let (label, path) = spec
                        .split_once('=')
                        .with_context(|| format!("expected LABEL=CSV, got {spec:?}"))?;
                    series.push(Series {
                        label: label.to_string(),
                        rows: read_metrics(path.as_ref())?,
                    });
                }
                let out = out.unwrap_or_else(|| PathBuf::from("plots"));
                for path in plot::write_metric_plots(&series, &out)? {
                    println!("{}", path.display());
                }
            }
        }
        Command::RunAll => print!("{}", p.run_all()?),
        Command::Report => print!("{}", p.report()?),
    }
    Ok(())
}
