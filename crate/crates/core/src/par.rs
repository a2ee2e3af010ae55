//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these run on the rayon global pool.
//! Without it every helper degrades to the plain sequential iterator, so the
//! results are identical either way: each item is computed by the same
//! closure and collected in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..n).map(f).collect()`, parallel when enabled.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
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

/// Maps every `width`-sized row of `data`, returning one output per row.
pub fn map_rows<T, F>(data: &[f32], width: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &[f32]) -> T + Sync + Send,
{
    debug_assert!(width > 0 && data.len() % width == 0);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_exact(width)
            .enumerate()
            .map(|(i, row)| f(i, row))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_exact(width)
            .enumerate()
            .map(|(i, row)| f(i, row))
            .collect()
    }
}

/// Maps a slice element-wise.
pub fn map_slice<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Whether the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
