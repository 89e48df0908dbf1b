//! Worker-count control.
//!
//! `LEXFORGE_THREADS` caps how many worker threads numeric kernels may use.
//! Unset or invalid values fall back to the machine's parallelism. Setting it
//! to 1 forces fully serial math, the configuration under which training is
//! bit-exactly reproducible.

use std::sync::OnceLock;

static WORKER_COUNT: OnceLock<usize> = OnceLock::new();

/// Number of worker threads numeric kernels are allowed to use (≥ 1).
pub fn worker_count() -> usize {
    *WORKER_COUNT.get_or_init(|| {
        let machine = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        match std::env::var("LEXFORGE_THREADS") {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n >= 1 => n,
                _ => {
                    log::warn!("ignoring invalid LEXFORGE_THREADS={v:?}");
                    machine
                }
            },
            Err(_) => machine,
        }
    })
}

/// Run `f(item_index, item_slice)` for every `item_len`-sized item of `out`,
/// distributing contiguous runs of items over the available workers.
///
/// `out.len()` must equal `items * item_len`. Item boundaries depend only on
/// the lengths and the worker count, never on scheduling, and each item is
/// written by exactly one thread, so results are identical across runs for a
/// fixed `LEXFORGE_THREADS`.
pub fn parallel_items_mut<T, F>(out: &mut [T], items: usize, item_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    assert_eq!(out.len(), items * item_len, "output length mismatch");
    if items == 0 {
        return;
    }
    let workers = worker_count().min(items);
    if workers <= 1 || item_len == 0 {
        for (i, item) in out.chunks_mut(item_len.max(1)).enumerate().take(items) {
            f(i, item);
        }
        return;
    }
    let per_worker = items.div_ceil(workers);
    std::thread::scope(|scope| {
        let f = &f;
        for (w, run) in out.chunks_mut(per_worker * item_len).enumerate() {
            scope.spawn(move || {
                for (j, item) in run.chunks_mut(item_len).enumerate() {
                    f(w * per_worker + j, item);
                }
            });
        }
    });
}
