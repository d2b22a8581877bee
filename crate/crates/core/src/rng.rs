//! Seed-stream helpers shared by the stochastic modules.
//!
//! Every stochastic operation takes an explicit `u64` seed and draws from a
//! ChaCha stream, so runs replay bit-for-bit regardless of call order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Deterministic RNG used across the crate.
pub type Rng = ChaCha12Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Derives an independent child seed from a base seed and an index
/// (splitmix64 finalizer over the combined value).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index)
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws an index from a categorical distribution given by `probs`.
///
/// `probs` is assumed nonnegative; it is implicitly normalized by its sum so
/// rows that carry small float drift still sample correctly.
pub fn sample_categorical(rng: &mut Rng, probs: &[f64]) -> usize {
    use rand::RngExt;
    let total: f64 = probs.iter().sum();
    debug_assert!(total > 0.0, "categorical row sums to {total}");
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Samples `k` distinct values from `0..n` uniformly, returned sorted.
pub fn sample_distinct_sorted(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    use rand::RngExt;
    assert!(k <= n);
    // Floyd's algorithm: uniform without replacement.
    let mut chosen = Vec::with_capacity(k);
    for j in (n - k)..n {
        let t = rng.random_range(0..=j);
        if chosen.contains(&t) {
            chosen.push(j);
        } else {
            chosen.push(t);
        }
    }
    chosen.sort_unstable();
    chosen
}
