//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run the same closures sequentially. Work is always split into
//! fixed-size blocks whose seeds depend only on the block index, so both
//! paths produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::rng::Seed;
use crate::stream::Picos;

/// Events handled per independently seeded block.
pub const BLOCK_LEN: usize = 1 << 16;

/// Evaluates `f(i)` for `i in 0..n`, in order.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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

/// Applies `f` to consecutive blocks of `events`, giving each block its own
/// derived seed, and concatenates the outputs.
pub fn map_event_blocks<R, F>(events: &[Picos], seed: Seed, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(&[Picos], Seed) -> Vec<R> + Sync + Send,
{
    let n_blocks = events.len().div_ceil(BLOCK_LEN);
    map_indexed(n_blocks, |b| {
        let lo = b * BLOCK_LEN;
        let hi = (lo + BLOCK_LEN).min(events.len());
        f(&events[lo..hi], seed.derive(b as u64))
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Runs `f` on a pool limited to `threads` workers. Without the `parallel`
/// feature this simply calls `f`.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .expect("failed to build thread pool")
            .install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
