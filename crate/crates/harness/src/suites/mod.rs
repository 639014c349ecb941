//! The named experiment suites.

pub mod hitting;
pub mod limit;
pub mod nonconvergence;
pub mod toy;
pub mod wlaw;

use std::fmt::Display;

use gwrw_core::parallel::{parallel_mc, ParallelError};
use gwrw_core::rng;
use gwrw_core::walk::{confirm_window, simulate_blocks, Block};

use crate::{HarnessError, Setup};

/// Stream tags separating the randomness of the parts of a suite.
pub(crate) mod tag {
    pub const BLOCKS: u64 = 1;
    pub const DIRECT_W: u64 = 2;
    pub const MODEL: u64 = 3;
    pub const TRAPS: u64 = 4;
    pub const ARRAY: u64 = 5;
    pub const BOOTSTRAP: u64 = 6;
    pub const TOY: u64 = 7;
}

pub(crate) fn sub_seed(seed: u64, tag: u64) -> u64 {
    rng::mix64(seed, tag)
}

pub(crate) fn mc<T: Send, E: Display + Send>(
    replicas: u64,
    workers: usize,
    task: impl Fn(u64) -> Result<T, E> + Sync + Send,
) -> Result<Vec<T>, HarnessError> {
    parallel_mc(replicas, workers, task).map_err(|e| match e {
        ParallelError::Pool { message, .. } => HarnessError::Run(message),
        other => HarnessError::Run(other.to_string()),
    })
}

/// Confirmation window used for all regeneration-block runs.
pub(crate) fn block_window(setup: &Setup) -> u64 {
    confirm_window(setup.params.beta, 1_000_000)
}

/// Regeneration blocks from `runs` independent backbone walks.
pub(crate) fn blocks(
    setup: &Setup,
    moves: u64,
    runs: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<Block>, HarnessError> {
    let window = block_window(setup);
    let all = mc(runs, workers, |r| {
        Ok::<_, HarnessError>(
            simulate_blocks(setup.laws.clone(), &setup.params, moves, window, seed, r).blocks,
        )
    })?;
    Ok(all.into_iter().flatten().collect())
}

/// Lower end of the one-sided 95% Wilson interval of a proportion.
pub(crate) fn wilson_lower(successes: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let z = 1.644_853_626_951_472_2;
    let n = n as f64;
    let p = successes as f64 / n;
    let centre = p + z * z / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
    ((centre - spread) / (1.0 + z * z / n)).max(0.0)
}

pub(crate) fn nonincreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

pub(crate) fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

pub(crate) fn list<T: Display>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub(crate) fn list4(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}
