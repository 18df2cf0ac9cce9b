//! Thread-pool scoping. Results never depend on the worker count because
//! every parallel task draws from its own keyed RNG stream and reductions run
//! in index order.

use crate::error::{Error, Result};

/// Runs `f` on a pool of `threads` workers, or on the global pool when `None`.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidInput(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
