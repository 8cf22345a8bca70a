//! Experiment runner for node-classification depth sweeps: config parsing,
//! parallel training of sweep cells, CSV reports, checkpoints and the
//! layer-residual diagnostic.

pub mod checkpoint;
pub mod config;
pub mod diagnose;
mod error;
pub mod report;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::BenchError;
pub use report::ReportRow;
pub use runner::{run_experiment, ExperimentResult};

pub const SEED_ENV: &str = "BENCH_SEED";

/// Seed precedence: command-line flag, then `BENCH_SEED`, then the config.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config: u64) -> Result<u64, BenchError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env.map(str::trim).filter(|s| !s.is_empty()) {
        Some(v) => v
            .parse()
            .map_err(|_| BenchError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        None => Ok(config),
    }
}

/// Keeps large training buffers out of mmap and stops glibc from trimming
/// the heap after every epoch. Without this, allocation churn dominates the
/// runtime of deep models.
pub fn tune_allocator() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 32 << 20);
        libc::mallopt(libc::M_TRIM_THRESHOLD, i32::MAX);
    }
}
