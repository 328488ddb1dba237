//! Data-parallel execution over independent work items.
//!
//! Results are always collected in input order and every reduction over them
//! is done sequentially afterwards, so the parallel and sequential paths give
//! bitwise-identical numbers.

use serde::{Deserialize, Serialize};

/// How independent work items (collocation chunks, tasks, seeds) are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parallelism {
    Sequential,
    /// Rayon work-stealing; falls back to sequential without the `parallel` feature.
    Rayon,
}

impl Default for Parallelism {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Parallelism::Rayon
        } else {
            Parallelism::Sequential
        }
    }
}

impl Parallelism {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Rayon
    }
}

/// Maps `f` over `items`, returning results in input order.
pub fn map_ordered<T, R, F>(items: &[T], mode: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Like [`map_ordered`] but over an index range.
pub fn map_indices<R, F>(n: usize, mode: Parallelism, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_results_match_sequential() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map_ordered(&items, Parallelism::Sequential, |x| x * x);
        let par = map_ordered(&items, Parallelism::Rayon, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(map_indices(5, Parallelism::Rayon, |i| i), vec![0, 1, 2, 3, 4]);
    }
}
