//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the `Parallel` mode dispatches to
//! rayon; without it every mode runs on the calling thread. Results are
//! always returned in index order so reductions done by the caller are
//! independent of scheduling.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Evaluates `f(0..n)` and collects the results in index order.
pub fn map_range<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Splits `0..n` into fixed-size chunks, maps each chunk and returns the
/// per-chunk results in order. Chunk boundaries do not depend on the number
/// of threads, so a sequential fold over the output is reproducible.
pub fn map_chunks<T, F>(exec: Execution, n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = n.div_ceil(chunk);
    map_range(exec, n_chunks, |c| {
        let start = c * chunk;
        f(start..(start + chunk).min(n))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree_and_keep_order() {
        let a = map_range(Execution::Sequential, 100, |i| i * i);
        let b = map_range(Execution::Parallel, 100, |i| i * i);
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
    }

    #[test]
    fn chunks_cover_range() {
        let sums = map_chunks(Execution::Parallel, 10, 3, |r| r.len());
        assert_eq!(sums, vec![3, 3, 3, 1]);
        assert!(map_chunks(Execution::Sequential, 0, 4, |r| r.len()).is_empty());
    }
}
