//! Data-parallel helpers with a sequential fallback.
//!
//! All internal data parallelism (finite-difference Jacobian columns,
//! simulation bursts for stability matrices, pairwise force loops) goes
//! through these two functions. With the `parallel` feature they dispatch to
//! rayon; without it they run plain iterators. Both paths produce results in
//! index order, so outputs are bitwise identical regardless of feature or
//! thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..n).map(f).collect()
}

/// Sequential reference version of [`map_indexed`], kept available in all
/// configurations so benchmarks can compare the two code paths directly.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..n).map(f).collect()
}
