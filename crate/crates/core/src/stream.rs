//! Reproducible random substreams and the block-parallel runner.
//!
//! Every block of a simulation draws from its own generator, keyed by the run
//! seed and a path of tags. Results depend only on the seed and the block
//! partition, never on how blocks are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type SimRng = ChaCha8Rng;

/// Symbols counted per parallel block.
pub const BLOCK_SYMBOLS: usize = 5_000;

/// Tags separating independent uses of one seed.
pub mod tag {
    pub const SYMBOLS: u64 = 0x5359_4d42;
    pub const CHANNEL: u64 = 0x4348_414e;
    pub const CALIBRATION: u64 = 0x4341_4c49;
    pub const TRAINING: u64 = 0x5452_4149;
    pub const SWEEP: u64 = 0x5357_4550;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a tag path.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Generator for the substream at `path` under `seed`.
pub fn substream(seed: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, path))
}

/// Splits `n` counted symbols into fixed-size blocks, runs `f(block, count)`
/// for each in parallel and folds the results with `merge`.
///
/// `merge` must be commutative and associative for the result to be
/// independent of scheduling.
pub fn run_blocks<T, F, M>(n: usize, identity: T, f: F, merge: M) -> T
where
    T: Send + Sync + Clone,
    F: Fn(u64, usize) -> T + Sync + Send,
    M: Fn(T, T) -> T + Sync + Send,
{
    let blocks = n.div_ceil(BLOCK_SYMBOLS);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let count = BLOCK_SYMBOLS.min(n - b * BLOCK_SYMBOLS);
            f(b as u64, count)
        })
        .reduce(|| identity.clone(), &merge)
}

/// Like [`run_blocks`] but keeps every block's output, in block order.
pub fn collect_blocks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, usize) -> T + Sync + Send,
{
    let blocks = n.div_ceil(BLOCK_SYMBOLS);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let count = BLOCK_SYMBOLS.min(n - b * BLOCK_SYMBOLS);
            f(b as u64, count)
        })
        .collect()
}
