//! Worker pool sized by `RETROMEM_THREADS`.

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const THREADS_VAR: &str = "RETROMEM_THREADS";

/// Available cores, capped by `RETROMEM_THREADS` when it holds a positive
/// integer.
pub fn worker_count() -> usize {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        Some(cap) if cap > 0 => cap.min(cores),
        _ => cores,
    }
}

/// Map `f` over `items` on a pool of [`worker_count`] threads. Results
/// keep input order and the first error in that order is returned.
pub fn par_map<I, O, F>(items: &[I], f: F) -> Result<Vec<O>>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> Result<O> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect::<Vec<_>>())
        .into_iter()
        .collect()
}
