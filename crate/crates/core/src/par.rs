//! Data-parallel map over member/sample indices.
//!
//! Results are collected in index order, so reductions downstream are
//! bit-for-bit identical for any worker count. The `parallel` feature
//! (default on) backs [`map_indexed`] with rayon; without it the same call
//! runs sequentially. [`map_indexed_seq`] is always sequential and exists so
//! benchmarks can compare both paths in one build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
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

/// Sequential reference implementation of [`map_indexed`].
pub fn map_indexed_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Cap the worker pool. Call once at startup; later calls are ignored (the
/// global pool can only be built once). No-op in sequential builds.
pub fn set_workers(n: usize) {
    #[cfg(feature = "parallel")]
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
    }
}

/// Number of workers the parallel map will use.
pub fn workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let f = |i: usize| (i as f64).sqrt() * 3.0 - i as f64;
        assert_eq!(map_indexed(257, f), map_indexed_seq(257, f));
    }

    #[test]
    fn empty_map_is_empty() {
        let out: Vec<u32> = map_indexed(0, |i| i as u32);
        assert!(out.is_empty());
    }
}
