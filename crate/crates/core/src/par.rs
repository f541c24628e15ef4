//! Execution policy for scan points and dense kernels.
//!
//! With the `parallel` feature, independent work items go to the rayon pool.
//! Without it, the same call sites run sequentially on the calling thread and
//! produce identical results: every item is computed independently and
//! collected in input order.

use std::sync::atomic::{AtomicUsize, Ordering};

static KERNEL_THREADS: AtomicUsize = AtomicUsize::new(1);

/// Threads used inside a single dense product. Defaults to 1 so that scans,
/// which already parallelize across points, do not oversubscribe.
pub fn set_kernel_threads(n: usize) {
    KERNEL_THREADS.store(n.max(1), Ordering::Relaxed);
}

pub fn kernel_threads() -> usize {
    KERNEL_THREADS.load(Ordering::Relaxed)
}

pub(crate) fn kernel_par() -> faer::Par {
    #[cfg(feature = "parallel")]
    {
        let n = kernel_threads();
        if n > 1 {
            return faer::Par::rayon(n);
        }
    }
    faer::Par::Seq
}

/// Configure the global worker pool. Only the first call takes effect.
pub fn init_pool(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

/// Workers available to [`map`]; 1 without the `parallel` feature.
pub fn pool_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Whether this build can run items concurrently.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Maps `f` over `items`, preserving order.
pub fn map<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sequential counterpart of [`map`], always available for comparison.
pub fn map_sequential<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    F: Fn(&I) -> O,
{
    items.iter().map(f).collect()
}

/// Applies `f` to each chunk of `data` of length `chunk`.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}
