//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the closures run on the ambient rayon pool;
//! without it they run in order on the calling thread. Work is always split
//! into fixed-size chunks whose partial results are combined in chunk order,
//! so results are bit-identical whatever the thread count.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Records per work unit for row-wise kernels.
pub const CHUNK: usize = 512;

/// Splits `0..n` into consecutive ranges of at most `chunk` items.
pub fn chunks(n: usize, chunk: usize) -> Vec<Range<usize>> {
    let chunk = chunk.max(1);
    (0..n.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(n))
        .collect()
}

/// Order-preserving map over `0..n`.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
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

/// Order-preserving map over ranges.
pub fn map_ranges<T, F>(ranges: Vec<Range<usize>>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        ranges.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().map(f).collect()
    }
}

/// Maps each chunk of `0..n` and folds the partials left to right.
pub fn fold_chunks<T, F, G>(n: usize, chunk: usize, map: F, mut merge: G) -> Option<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
    G: FnMut(T, T) -> T,
{
    let mut parts = map_ranges(chunks(n, chunk), map).into_iter();
    let first = parts.next()?;
    Some(parts.fold(first, &mut merge))
}

/// Whether the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
