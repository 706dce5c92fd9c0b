//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature (default) work runs on the rayon pool;
//! without it, [`Execution::Parallel`] falls back to a sequential loop.
//! Results are always returned in index order, so reductions over them do
//! not depend on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// `(0..len).map(f).collect()`, possibly in parallel.
pub fn map_indexed<T, F>(len: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..len).into_par_iter().map(f).collect(),
        _ => (0..len).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let f = |i: usize| (i * 7919) % 13;
        let seq = map_indexed(1000, Execution::Sequential, f);
        let par = map_indexed(1000, Execution::Parallel, f);
        assert_eq!(seq, par);
        assert_eq!(seq[5], (5 * 7919) % 13);
    }
}
