use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use lampinn_bench::export::{render_report, StatsReport, Summary};
use lampinn_bench::store::read_json;
use lampinn_bench::{config, plotdata, rebase_out_dir, ExperimentConfig, Pipeline, Stage, OUT_ROOT_ENV};

#[derive(Parser)]
#[command(name = "lampinn", version, about = "Learning-affinity modular PINN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset: helmholtz-paper, burgers-paper or helmholtz-desk.
    #[arg(long)]
    preset: Option<String>,
    /// Run seeds; repeat to give several. Replaces the configured list.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fan independent task runs out over threads.
    #[arg(long, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    parallel: Option<bool>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate training, unseen and out-of-range task sets.
    Doe(Common),
    /// Pre-train on the reference task and measure learning-affinity metrics.
    Preprocess(Common),
    /// Cluster training tasks by their embeddings.
    Cluster(Common),
    /// Train the modular network.
    Train(Common),
    /// Transfer the modular network to the unseen tasks.
    Transfer(Common),
    /// Adapt the baseline methods to the unseen tasks.
    Baseline(Common),
    /// Run remaining evaluations and write results.csv, summary.json and stats.json.
    Stats(Common),
    /// Print a summary table (runs the statistics stage if needed).
    Report(Common),
    /// Write plot data; all kinds unless one is named.
    Plotdata {
        #[command(flatten)]
        common: Common,
        /// convergence, lambda_trajectory, layer_magnitudes or ood_sweep.
        #[arg(long)]
        kind: Option<String>,
    },
    /// Run every stage.
    Run(Common),
    /// Print a preset as TOML.
    ShowPreset { name: String },
    /// Print the hash identifying the resolved configuration.
    Hash(Common),
}

fn resolve(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => config::preset(name)?,
        (None, None) => config::preset("helmholtz-desk")?,
    };
    if !c.seeds.is_empty() {
        cfg.seeds = c.seeds.clone();
    }
    if let Some(p) = c.parallel {
        cfg.parallel = p;
    }
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    } else if let Some(root) = std::env::var_os(OUT_ROOT_ENV) {
        cfg.out_dir = rebase_out_dir(&cfg.out_dir, &PathBuf::from(root));
    }
    Ok(cfg)
}

fn run_to(c: &Common, stage: Stage) -> Result<Pipeline> {
    let mut p = Pipeline::open(resolve(c)?)?;
    p.run_through(stage)?;
    eprintln!("{} complete in {}", stage, p.layout.root.display());
    Ok(p)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Doe(c) => drop(run_to(&c, Stage::Doe)?),
        Command::Preprocess(c) => drop(run_to(&c, Stage::Preprocess)?),
        Command::Cluster(c) => drop(run_to(&c, Stage::Cluster)?),
        Command::Train(c) => drop(run_to(&c, Stage::Train)?),
        Command::Transfer(c) => drop(run_to(&c, Stage::Transfer)?),
        Command::Baseline(c) => drop(run_to(&c, Stage::Baseline)?),
        Command::Stats(c) => drop(run_to(&c, Stage::Stats)?),
        Command::Run(c) => drop(run_to(&c, Stage::Plotdata)?),
        Command::Report(c) => {
            let p = run_to(&c, Stage::Stats)?;
            let summary: Summary = read_json(&p.layout.file("summary.json"))?;
            let stats: StatsReport = read_json(&p.layout.file("stats.json"))?;
            print!("{}", render_report(&summary, &stats));
        }
        Command::Plotdata { common, kind } => {
            let p = run_to(&common, if kind.is_some() { Stage::Stats } else { Stage::Plotdata })?;
            if let Some(kind) = kind {
                for path in plotdata::emit(&p, &kind)? {
                    println!("{}", path.display());
                }
            }
        }
        Command::Hash(c) => println!("{}", resolve(&c)?.hash()),
        Command::ShowPreset { name } => {
            print!("{}", config::preset(&name)?.to_toml().context("serializing preset")?);
        }
    }
    Ok(())
}
