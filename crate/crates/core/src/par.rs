//! Thin data-parallel layer. With the `parallel` feature the helpers fan
//! out over rayon's pool; without it they run sequentially. Every helper
//! produces results in input order, so output never depends on the
//! thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `f` to each `n_cols`-wide row of `values` in place. `f` receives
/// the row index.
pub fn for_each_row_mut<F>(values: &mut [f32], n_cols: usize, f: F)
where
    F: Fn(usize, &mut [f32]) + Sync + Send,
{
    if n_cols == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    values
        .par_chunks_mut(n_cols)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
    #[cfg(not(feature = "parallel"))]
    values
        .chunks_mut(n_cols)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Map over `0..n`, collecting in index order.
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

/// Map over a slice, collecting in input order.
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

/// Number of workers the helpers will use.
pub fn current_num_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
