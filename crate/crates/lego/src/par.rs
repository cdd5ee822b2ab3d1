//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these fan out over rayon; without it
//! they run sequentially. A runtime switch lets benchmarks compare both paths
//! in a single build. Every helper preserves index order, so results are
//! byte-identical regardless of thread count.

use std::sync::atomic::{AtomicBool, Ordering};

static PARALLEL: AtomicBool = AtomicBool::new(cfg!(feature = "parallel"));

/// Enable or disable rayon at runtime. A no-op in sequential builds.
pub fn set_parallel(on: bool) {
    PARALLEL.store(on && cfg!(feature = "parallel"), Ordering::Relaxed);
}

pub fn parallel_enabled() -> bool {
    PARALLEL.load(Ordering::Relaxed)
}

/// Map `0..n` to a vector, preserving order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Split `out` into blocks of whole rows and invoke `f(first_row, block)` on
/// each. Blocks are disjoint, so the parallel and sequential paths produce
/// identical bytes.
pub fn for_each_row_block<T, F>(out: &mut [T], row_len: usize, min_rows: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(row_len > 0 && out.len().is_multiple_of(row_len));
    let rows = out.len() / row_len;
    let block_rows = min_rows.max(1).min(rows.max(1));

    #[cfg(feature = "parallel")]
    if parallel_enabled() && rows > block_rows {
        use rayon::prelude::*;
        out.par_chunks_mut(block_rows * row_len)
            .enumerate()
            .for_each(|(b, chunk)| f(b * block_rows, chunk));
        return;
    }
    out.chunks_mut(block_rows * row_len)
        .enumerate()
        .for_each(|(b, chunk)| f(b * block_rows, chunk));
}
