//! Data-parallel helpers with a sequential fallback.
//!
//! Work items are indexed `0..n` and results are returned (or written) in
//! index order, so every caller is bit-deterministic regardless of worker
//! count. Building with `--no-default-features` removes rayon entirely; the
//! `*_seq` variants always exist and are what the criterion benches compare
//! against.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting results in index order.
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
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
        map_collect_seq(n, f)
    }
}

/// Sequential twin of [`map_collect`].
pub fn map_collect_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Applies `f(i, &mut items[i])` to every slot.
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for_each_mut_seq(items, f)
    }
}

/// Sequential twin of [`for_each_mut`].
pub fn for_each_mut_seq<T, F>(items: &mut [T], f: F)
where
    F: Fn(usize, &mut T),
{
    for (i, x) in items.iter_mut().enumerate() {
        f(i, x);
    }
}

/// Block size used by [`sum_blocks`]; fixed so the reduction tree does not
/// depend on the worker count.
pub const SUM_BLOCK: usize = 4096;

/// Sums `f(i)` over `0..n` by fixed-size blocks: block partials are computed
/// in parallel and combined in block order, so the result is bit-identical
/// for any number of threads.
pub fn sum_blocks<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let nblocks = n.div_ceil(SUM_BLOCK);
    let partials = map_collect(nblocks, |b| {
        let lo = b * SUM_BLOCK;
        let hi = (lo + SUM_BLOCK).min(n);
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        acc
    });
    partials.into_iter().sum()
}

/// Sequential twin of [`sum_blocks`] (same blocking, same result).
pub fn sum_blocks_seq<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64,
{
    let nblocks = n.div_ceil(SUM_BLOCK);
    let mut total = 0.0;
    for b in 0..nblocks {
        let lo = b * SUM_BLOCK;
        let hi = (lo + SUM_BLOCK).min(n);
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        total += acc;
    }
    total
}
