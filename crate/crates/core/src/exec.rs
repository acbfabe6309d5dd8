//! Sequential and data-parallel execution of the hot loops.
//!
//! Every parallel path splits work into fixed-size chunks and reduces the
//! per-chunk results in chunk order, so both modes return identical values.
//! Without the `parallel` feature, [`ExecMode::Parallel`] runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of items handled by one reduction leaf.
pub const CHUNK_LEN: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

impl ExecMode {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Order-preserving map.
pub fn map_collect<T, U, F>(items: &[T], mode: ExecMode, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Maps each index in `0..n` and collects in index order.
pub fn map_range<U, F>(n: usize, mode: ExecMode, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Folds each chunk of `items` with `leaf`, then combines the chunk results
/// left to right with `combine`.
pub fn chunked_reduce<T, A, L, C>(items: &[T], mode: ExecMode, leaf: L, init: A, combine: C) -> A
where
    T: Sync,
    A: Send,
    L: Fn(&[T]) -> A + Sync + Send,
    C: Fn(A, A) -> A,
{
    let chunks: Vec<&[T]> = items.chunks(CHUNK_LEN).collect();
    let partials = map_collect(&chunks, mode, |c| leaf(c));
    partials.into_iter().fold(init, combine)
}
