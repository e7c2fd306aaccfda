//! Counter-based random streams.
//!
//! Every replica draws from its own ChaCha8 stream, keyed by a root seed, a
//! tag naming the estimator, and the replica index. A replica's draws do not
//! depend on which worker runs it or in what order, so estimates are
//! reproducible for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// The random stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Derives per-replica streams from one 64-bit root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeder {
    root: u64,
}

impl Seeder {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Stream for replica `replica` of the estimator named `tag`.
    pub fn stream(&self, tag: &str, replica: u64) -> Stream {
        let mut key = [0u8; 32];
        let mut state = self.root ^ fnv1a(tag.as_bytes());
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(replica);
        rng
    }

    /// A seeder for a sub-experiment; children with distinct labels are independent.
    pub fn child(&self, label: &str) -> Seeder {
        let mut state = self.root ^ fnv1a(label.as_bytes()).rotate_left(17);
        Seeder::new(splitmix64(&mut state))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `f` for every replica index and returns the results in index order.
///
/// Uses the ambient rayon pool, so callers control the worker count with
/// `ThreadPool::install`.
pub fn replicate<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

/// Replicas per block in [`replicate_blocks`].
pub const BLOCK: usize = 256;

/// Runs `f(r, out)` for every replica; each call may push any number of
/// results. Results are returned in replica order.
pub fn replicate_blocks<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut Vec<T>) + Sync + Send,
{
    let blocks = count.div_ceil(BLOCK);
    let parts = replicate(blocks, |b| {
        let mut out = Vec::new();
        for r in b * BLOCK..((b + 1) * BLOCK).min(count) {
            f(r, &mut out);
        }
        out
    });
    parts.into_iter().flatten().collect()
}
