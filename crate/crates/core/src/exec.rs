//! Data-parallel map with a sequential fallback.
//!
//! [`map_range`] dispatches to rayon when the `parallel` feature is enabled
//! and to plain iteration otherwise. Output order is the index order either
//! way, so callers see identical results regardless of backend or worker
//! count. The `_seq` / `_par` variants are exposed for the benchmark suite.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to every index in `0..n`, collecting results in index order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_range_par(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_range_seq(n, f)
    }
}

/// Sequential backend.
pub fn map_range_seq<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Rayon backend; preserves index order in the output.
#[cfg(feature = "parallel")]
pub fn map_range_par<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}
