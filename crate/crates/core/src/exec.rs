//! Execution lanes for per-clip work.
//!
//! Every per-clip map in the crate goes through [`Lanes`]. Results are always
//! returned in index order, so reductions over them happen in a fixed order
//! whatever the lane count.

use alloc::vec::Vec;

pub trait Lanes: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

/// Single-lane execution; the bit-exact reference mode.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Lanes for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..n).map(f).collect()
    }
}
