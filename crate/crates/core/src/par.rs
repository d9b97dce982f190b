//! Deterministic data-parallel helpers.
//!
//! With the `parallel` feature enabled the maps below fan out over rayon;
//! without it they run as plain sequential loops.  Either way the result
//! is bit-identical: parallelism is only applied across *independent
//! output elements* (each element is produced by a sequential inner
//! computation), never across floating-point reductions, so thread count
//! and work stealing cannot change any rounding.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Collect `f(0), f(1), ..., f(n-1)` into a `Vec`, in index order.
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

