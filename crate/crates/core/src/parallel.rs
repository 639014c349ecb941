//! Replica-parallel Monte Carlo with results in replica order.

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParallelError<E: std::fmt::Display> {
    #[error("replica {replica} failed after {completed} replicas completed: {error}")]
    ReplicaFailed {
        replica: u64,
        completed: usize,
        error: E,
    },
    #[error("could not start a pool of {workers} workers: {message}")]
    Pool { workers: usize, message: String },
}

/// Runs `task(replica)` for `replica in 0..replicas` on `workers` threads.
/// Every replica derives its randomness from its own index, and results are
/// returned in index order, so the output does not depend on `workers`.
pub fn parallel_mc<T, E, F>(
    replicas: u64,
    workers: usize,
    task: F,
) -> Result<Vec<T>, ParallelError<E>>
where
    T: Send,
    E: Send + std::fmt::Display,
    F: Fn(u64) -> Result<T, E> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ParallelError::Pool {
            workers,
            message: e.to_string(),
        })?;
    let results: Vec<Result<T, E>> =
        pool.install(|| (0..replicas).into_par_iter().map(&task).collect());
    let completed = results.iter().filter(|r| r.is_ok()).count();
    let mut out = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(error) => {
                return Err(ParallelError::ReplicaFailed {
                    replica: i as u64,
                    completed,
                    error,
                })
            }
        }
    }
    Ok(out)
}

/// Worker count from `GWRW_WORKERS`, defaulting to the available parallelism.
pub fn default_workers() -> usize {
    std::env::var("GWRW_WORKERS")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&w: &usize| w > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}
