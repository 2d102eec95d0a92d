//! Independent Monte-Carlo replicas with per-replica RNG streams.
//!
//! Replica `i` always receives stream `i` of the experiment seed and results
//! come back in replica order, so any reduction done by the caller is
//! independent of how many threads ran the work.

use rayon::prelude::*;

use crate::noise::RngStream;

/// Runs `f(i, stream_i)` for `i in 0..n` on the global rayon pool, or on a
/// dedicated pool of `threads` workers when given.
pub fn run_replicas<T, F>(n: usize, seed: u64, threads: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, RngStream) -> T + Sync + Send,
{
    let work = || (0..n).into_par_iter().map(|i| f(i, RngStream::new(seed, i as u64))).collect();
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .expect("failed to build thread pool")
            .install(work),
        None => work(),
    }
}
