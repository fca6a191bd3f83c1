//! Counter-based per-path random streams.
//!
//! Every path draws from a ChaCha8 stream keyed by `(seed, stream)`, so a path farm
//! produces the same numbers regardless of how paths are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;

pub type PathRng = ChaCha8Rng;

/// The random stream for path `stream` under `seed`.
pub fn path_rng(seed: u64, stream: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive an independent seed for a sub-experiment.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Run `f(i)` for `i in 0..n` on the rayon pool, returning results in index order.
pub fn farm<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}
