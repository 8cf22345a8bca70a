use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gnnlab_bench::checkpoint::load_checkpoint;
use gnnlab_bench::config::parse_list;
use gnnlab_bench::diagnose::{format_residuals, model_residuals};
use gnnlab_bench::report::{format_report, write_atomic};
use gnnlab_bench::runner::load_experiment_dataset;
use gnnlab_bench::{resolve_seed, run_experiment, tune_allocator, BenchError, ExperimentConfig, SEED_ENV};
use gnnlab_core::graph::save_dataset;
use gnnlab_core::graph::synthetic::{citation_like, SyntheticSpec};
use gnnlab_core::zoo::ModelInput;

#[derive(Parser)]
#[command(name = "bench", about = "Node-classification experiments and depth sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    config: PathBuf,
    /// Concurrent training runs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Base seed; overrides BENCH_SEED and the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every cell of a config and write the reports.
    Run(RunArgs),
    /// Like `run`, over an explicit depth list.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated, strictly increasing.
        #[arg(long)]
        depths: String,
    },
    /// Per-layer residuals of a saved model on the config's dataset.
    Diagnose {
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded citation-like dataset in the text format.
    Synth {
        dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2708)]
        nodes: usize,
        #[arg(long, default_value_t = 1433)]
        features: usize,
        #[arg(long, default_value_t = 7)]
        classes: usize,
        #[arg(long, default_value_t = 20)]
        train_per_class: usize,
        #[arg(long, default_value_t = 500)]
        val: usize,
        #[arg(long, default_value_t = 1000)]
        test: usize,
    },
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, BenchError> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    let env = std::env::var(SEED_ENV).ok();
    cfg.seed = resolve_seed(args.seed, env.as_deref(), cfg.seed)?;
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<(), BenchError> {
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(BenchError::Config("--jobs must be positive".into()));
    }
    let result = run_experiment(cfg, jobs)?;
    print!("{}", format_report(&result.rows()));
    Ok(())
}

fn execute(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Run(args) => run(&load_config(&args)?, args.jobs),
        Command::Sweep { run: args, depths } => {
            let cfg = load_config(&args)?.with_depths(parse_list("depths", &depths)?)?;
            run(&cfg, args.jobs)
        }
        Command::Diagnose { config, checkpoint, out } => {
            let cfg = ExperimentConfig::from_file(config)?;
            let g = load_experiment_dataset(&cfg)?;
            let model = load_checkpoint(&checkpoint)?;
            if model.n_features() != g.d() || model.n_classes() != g.n_classes() {
                return Err(BenchError::Data(format!(
                    "checkpoint expects {} features and {} classes, dataset has {} and {}",
                    model.n_features(),
                    model.n_classes(),
                    g.d(),
                    g.n_classes()
                )));
            }
            let csv = format_residuals(&model_residuals(&model, &ModelInput::from_dataset(&g))?);
            match out {
                Some(p) => write_atomic(&p, &csv),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            }
        }
        Command::Synth { dir, seed, nodes, features, classes, train_per_class, val, test } => {
            let spec = SyntheticSpec {
                n: nodes,
                d: features,
                classes,
                train_per_class,
                val,
                test,
                ..SyntheticSpec::default()
            };
            if features == 0 || classes == 0 {
                return Err(BenchError::Config("features and classes must be positive".into()));
            }
            if classes * train_per_class + val + test > nodes {
                return Err(BenchError::Config(format!("{nodes} nodes cannot hold the requested split")));
            }
            save_dataset(&citation_like(&spec, seed), &dir)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    tune_allocator();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
