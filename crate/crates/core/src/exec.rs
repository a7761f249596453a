//! Chunked execution helpers shared by the data-parallel kernels.
//!
//! Work is split on fixed chunk boundaries and partial results are combined
//! in chunk order, so output is identical for any thread count and for the
//! sequential path. Without the `parallel` feature, `Parallel` degrades to
//! the sequential loop.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Whether a kernel may fan out over the rayon pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

/// Runs `f(offset, chunk)` over fixed-size chunks of `data`.
pub(crate) fn for_each_chunk_mut<T, F>(mode: ExecMode, data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    debug_assert!(chunk > 0);
    match mode {
        ExecMode::Sequential => {
            for (i, c) in data.chunks_mut(chunk).enumerate() {
                f(i * chunk, c);
            }
        }
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                data.par_chunks_mut(chunk)
                    .enumerate()
                    .for_each(|(i, c)| f(i * chunk, c));
            }
            #[cfg(not(feature = "parallel"))]
            {
                for (i, c) in data.chunks_mut(chunk).enumerate() {
                    f(i * chunk, c);
                }
            }
        }
    }
}

/// Maps `f` over `items`, preserving order.
pub(crate) fn map_indexed<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    match mode {
        ExecMode::Sequential => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
            }
        }
    }
}
