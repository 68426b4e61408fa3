//! Seeded random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used everywhere in the crate. ChaCha output is stable across
/// platforms and crate versions, which the reproducibility contracts need.
pub type HapRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> HapRng {
    HapRng::seed_from_u64(seed)
}

/// Independent stream for `(seed, a, b)`, so per-example noise does not
/// depend on scheduling order.
pub fn derived(seed: u64, a: u64, b: u64) -> HapRng {
    let mut z = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [a, b] {
        z = splitmix(z ^ v.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    }
    HapRng::seed_from_u64(z)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
