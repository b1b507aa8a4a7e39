//! Thread-count control for internal data parallelism.
//!
//! `AVFUSION_THREADS` caps the number of worker threads (default 1, which
//! keeps everything on the calling thread). Parallel kernels split work so
//! that each output element is still computed with the same sequential
//! reduction order, keeping results bitwise identical to a 1-thread run.

use std::sync::OnceLock;

static THREADS: OnceLock<usize> = OnceLock::new();

/// Number of worker threads to use, from `AVFUSION_THREADS` (min 1).
pub fn effective_threads() -> usize {
    *THREADS.get_or_init(|| {
        std::env::var("AVFUSION_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .map(|n| n.max(1))
            .unwrap_or(1)
    })
}

/// Run `work` over disjoint row chunks of `out`, each chunk on its own
/// thread when `threads > 1`. `work(row0, rows)` must write only its chunk.
pub fn for_each_row_chunk<F>(out: &mut [f64], row_len: usize, threads: usize, work: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    debug_assert!(row_len > 0 && out.len() % row_len == 0);
    let rows = out.len() / row_len;
    let threads = threads.min(rows).max(1);
    if threads == 1 {
        work(0, out);
        return;
    }
    let chunk_rows = rows.div_ceil(threads);
    std::thread::scope(|scope| {
        let work = &work;
        for (i, chunk) in out.chunks_mut(chunk_rows * row_len).enumerate() {
            scope.spawn(move || work(i * chunk_rows, chunk));
        }
    });
}
