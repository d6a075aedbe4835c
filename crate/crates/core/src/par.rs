//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it they
//! fall back to plain sequential iterators. Results are always collected in index
//! order so every reduction downstream is deterministic regardless of the thread
//! count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluates `f(i)` for `i in 0..n` and collects the results in order.
#[cfg(feature = "parallel")]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Applies `f(i, &mut item)` to every element of `items`.
#[cfg(feature = "parallel")]
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    items.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    items.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

/// Chunk size used for row-parallel loops; small problems stay on one thread.
pub(crate) const MIN_PARALLEL_LEN: usize = 4096;

/// Row-parallel `y[i] = f(i)` for long vectors, sequential otherwise.
pub fn fill<F>(y: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    if y.len() < MIN_PARALLEL_LEN {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = f(i);
        }
    } else {
        for_each_mut(y, |i, yi| *yi = f(i));
    }
}
