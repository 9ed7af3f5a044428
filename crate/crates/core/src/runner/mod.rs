//! Training orchestration: configuration, the training loop, metrics,
//! checkpoints, ablations and a text plot of metrics files.

mod ablation;
mod checkpoint;
mod config;
mod data;
mod metrics;
mod plot;
mod train;

pub use ablation::{ablation_variants, format_ablation_table, run_ablation_suite, AblationResult};
pub use checkpoint::Checkpoint;
pub use config::{TrainConfig, TrainMode, WeakMode};
pub use data::{load_datasets, skew_weights};
pub use metrics::{parse_metrics, MetricsRow, METRICS_HEADER};
pub use plot::plot_metrics;
pub use train::{error_rate, evaluate, evaluate_params, train, TrainOutcome, TrainState};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "REMIXMATCH_WORKERS";

/// Runs `f` on a thread pool sized by [`WORKERS_ENV`] (default: all cores).
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> crate::Result<T> {
    let workers = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| crate::error::config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| crate::error::config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
