//! Order-preserving parallel map on a bounded worker pool.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Apply `f` to every item on `workers` threads. The output follows input
/// order; one worker runs inline on the calling thread.
pub fn map_ordered<T, R, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    if workers == 0 {
        return Err(Error::Precondition("workers must be at least 1".into()));
    }
    if workers == 1 {
        return Ok(items.iter().enumerate().map(|(i, x)| f(i, x)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()))
}
