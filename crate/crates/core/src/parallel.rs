//! Worker-count control. Results never depend on the worker count; this only
//! bounds resource use.

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "QGBC_THREADS";

/// Parses `QGBC_THREADS`; `None` when unset or empty.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        _ => Ok(None),
    }
}

/// Sizes the global pool from `QGBC_THREADS` (default: available cores).
/// Has no effect if the global pool already exists.
pub fn init_global_pool() -> Result<()> {
    if let Some(n) = threads_from_env()? {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs `f` on a dedicated pool of `n` workers.
pub fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}
