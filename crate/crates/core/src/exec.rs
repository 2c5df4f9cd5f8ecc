//! Execution strategy for embarrassingly parallel sample loops.

use alloc::vec::Vec;

/// Maps an index range to values, preserving index order in the output.
///
/// Implementations may evaluate indices in any order and on any thread, but
/// must return `f(0), f(1), ..., f(count - 1)` in that order so reductions
/// downstream are bit-for-bit reproducible.
pub trait Executor: Sync {
    fn map_indexed<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_indexed<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).map(f).collect()
    }
}
