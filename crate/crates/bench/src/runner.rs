use std::path::Path;
use std::time::Instant;

use gnnlab_core::graph::{load_dataset, GraphDataset};
use gnnlab_core::rng::{derive_seed, hash_str};
use gnnlab_core::train::{mean_std, run_seed, train_model, EpochRecord};
use gnnlab_core::zoo::{Model, Variant};
use rayon::prelude::*;

use crate::checkpoint::save_checkpoint;
use crate::config::ExperimentConfig;
use crate::report::{emit_plot_data, format_curves, format_report, format_runs, write_atomic, ReportRow, RunRecord};
use crate::BenchError;

/// Base seed of one sweep cell; independent of the other cells.
pub fn cell_seed(base: u64, variant: Variant, depth: usize) -> u64 {
    derive_seed(base, &[hash_str(variant.name()), depth as u64])
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub row: ReportRow,
    pub runs: Vec<RunRecord>,
    /// Per-epoch record of run 0.
    pub curve: Vec<EpochRecord>,
    /// Trained model of run 0, kept when checkpoints are enabled.
    pub model: Option<Model>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
}

impl ExperimentResult {
    pub fn rows(&self) -> Vec<ReportRow> {
        self.cells.iter().map(|c| c.row.clone()).collect()
    }
}

pub fn load_experiment_dataset(cfg: &ExperimentConfig) -> Result<GraphDataset, BenchError> {
    let g = load_dataset(&cfg.dataset)?;
    Ok(if cfg.row_normalize { g.row_normalized() } else { g })
}

struct RunOutput {
    record: RunRecord,
    curve: Option<Vec<EpochRecord>>,
    model: Option<Model>,
    seconds: f64,
}

/// Trains every run of every cell, at most `jobs` at a time. Results do
/// not depend on `jobs`.
pub fn run_cells(cfg: &ExperimentConfig, g: &GraphDataset, jobs: usize) -> Result<ExperimentResult, BenchError> {
    let cells = cfg.cells();
    let mut tasks = Vec::new();
    for (ci, &(variant, depth)) in cells.iter().enumerate() {
        let (model_cfg, train_cfg) = cfg.cell_configs(variant, depth)?;
        let base = cell_seed(cfg.seed, variant, depth);
        for r in 0..cfg.runs {
            let mut tc = train_cfg.clone();
            tc.seed = run_seed(base, r);
            tasks.push((ci, r, model_cfg.clone(), tc));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| BenchError::Config(format!("cannot start {jobs} workers: {e}")))?;
    let outputs: Vec<Result<RunOutput, BenchError>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(ci, r, mc, tc)| {
                let (variant, depth) = cells[*ci];
                let start = Instant::now();
                let out = train_model(g, mc, tc)?;
                let seconds = start.elapsed().as_secs_f64();
                log::info!(
                    "{variant} depth {depth} run {r}: test {:.4} at epoch {} ({seconds:.1}s)",
                    out.metrics.test_acc,
                    out.metrics.best_epoch
                );
                let m = out.metrics;
                Ok(RunOutput {
                    record: RunRecord {
                        variant,
                        depth,
                        run: *r,
                        seed: tc.seed,
                        test_acc: m.test_acc,
                        best_epoch: m.best_epoch,
                        best_val_acc: m.best_val_acc,
                        epochs: m.epochs.len(),
                    },
                    curve: (*r == 0).then_some(m.epochs),
                    model: (*r == 0 && cfg.checkpoints).then_some(out.model),
                    seconds,
                })
            })
            .collect()
    });

    let mut grouped: Vec<Vec<RunOutput>> = cells.iter().map(|_| Vec::new()).collect();
    for ((ci, ..), out) in tasks.iter().zip(outputs) {
        grouped[*ci].push(out?);
    }
    let cells = cells
        .iter()
        .zip(grouped)
        .map(|(&(variant, depth), mut outs)| {
            let accs: Vec<f64> = outs.iter().map(|o| o.record.test_acc).collect();
            let (mean_acc, std_acc) = mean_std(&accs);
            let seconds = if cfg.timing {
                outs.iter().map(|o| o.seconds).sum::<f64>() / outs.len() as f64
            } else {
                0.0
            };
            let first = &mut outs[0];
            let curve = first.curve.take().unwrap_or_default();
            let model = first.model.take();
            CellResult {
                row: ReportRow { variant, depth, mean_acc, std_acc, runs: accs.len(), seconds },
                runs: outs.into_iter().map(|o| o.record).collect(),
                curve,
                model,
            }
        })
        .collect();
    Ok(ExperimentResult { cells })
}

/// Writes `report.csv`, `runs.csv`, `curves.csv`, `plot.csv` and any
/// checkpoints under `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<(), BenchError> {
    let rows = result.rows();
    let runs: Vec<RunRecord> = result.cells.iter().flat_map(|c| c.runs.iter().cloned()).collect();
    let curves: Vec<_> = result
        .cells
        .iter()
        .map(|c| (c.row.variant, c.row.depth, c.curve.as_slice()))
        .collect();
    write_atomic(&dir.join("report.csv"), &format_report(&rows))?;
    write_atomic(&dir.join("runs.csv"), &format_runs(&runs))?;
    write_atomic(&dir.join("curves.csv"), &format_curves(&curves))?;
    write_atomic(&dir.join("plot.csv"), &emit_plot_data(&rows)?)?;
    for c in &result.cells {
        if let Some(m) = &c.model {
            let name = format!("{}-depth{}.json", c.row.variant, c.row.depth);
            save_checkpoint(m, &dir.join("checkpoints").join(name))?;
        }
    }
    Ok(())
}

/// Loads the dataset, trains all cells and writes the report files.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentResult, BenchError> {
    let g = load_experiment_dataset(cfg)?;
    log::info!(
        "dataset {}: {} nodes, {} features, {} classes, {} edges",
        cfg.dataset.display(),
        g.n(),
        g.d(),
        g.n_classes(),
        g.edges().len()
    );
    let result = run_cells(cfg, &g, jobs)?;
    write_outputs(&result, &cfg.out)?;
    Ok(result)
}
