//! Pluggable execution strategy for embarrassingly parallel loops.

use alloc::vec::Vec;

/// Maps a function over `0..len` and returns results in index order.
///
/// Implementations may evaluate indices concurrently, but the output must be
/// the same as the serial map. Every parallel loop in this crate is written so
/// that each index does independent, deterministic work.
pub trait Executor: Sync {
    fn map_range<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Single-threaded executor.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map_range<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..len).map(f).collect()
    }
}
