//! Data-parallel map helpers with a sequential fallback.
//!
//! The hot loops (casting thousands of candidate rays, batch surface
//! queries, voxel scans) are embarrassingly parallel maps. With the
//! `parallel` feature (default) they fan out over rayon; without it the
//! same entry points run sequentially. Results are always collected in
//! input order and reductions happen sequentially afterwards, so output
//! bytes do not depend on thread count or scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_slice<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.par_iter().map(f).collect()
}

/// Map `f` over `items`, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn map_slice<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    map_slice_seq(items, f)
}

/// Sequential reference implementation of [`map_slice`]. Kept unconditionally
/// so benchmarks can compare both lanes in one build.
pub fn map_slice_seq<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Map `f` over the index range `0..n`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_range<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over the index range `0..n`, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn map_range<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    map_range_seq(n, f)
}

/// Sequential reference implementation of [`map_range`].
pub fn map_range_seq<R>(n: usize, f: impl Fn(usize) -> R) -> Vec<R> {
    (0..n).map(f).collect()
}
