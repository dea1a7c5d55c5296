//! Seeded randomness.
//!
//! Every stochastic step in the pipeline draws from ChaCha8 (`rand_chacha`
//! 0.9), seeded either directly from a `u64` or from a substream key derived
//! with SplitMix64. Substream derivation keeps independent concerns (split
//! shuffling, per-epoch negative sampling, cohort synthesis) statistically
//! decoupled while remaining reproducible from a single top-level seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. Bijective on u64, good avalanche behavior.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a substream seed by folding `parts` into `seed` one SplitMix64
/// round at a time. Order of parts matters.
pub fn mix(seed: u64, parts: &[u64]) -> u64 {
    let mut acc = splitmix64(seed);
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

/// Fresh ChaCha8 stream for `seed`.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform sample of `k` items without replacement via partial Fisher-Yates.
/// Takes the whole pool (in input order) when `k >= pool.len()`, so callers
/// that pass a sorted pool get a canonical result in the take-everything case.
pub fn sample_without_replacement<T: Copy>(pool: &[T], k: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    use rand::Rng;
    if k >= pool.len() {
        return pool.to_vec();
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
        out.push(pool[idx[i]]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn mix_is_order_sensitive() {
        assert_ne!(mix(7, &[1, 2]), mix(7, &[2, 1]));
        assert_ne!(mix(7, &[1]), mix(8, &[1]));
        // Same inputs, same output.
        assert_eq!(mix(42, &[3, 9]), mix(42, &[3, 9]));
    }

    #[test]
    fn sample_takes_whole_pool_when_k_large() {
        let pool = [3, 1, 4, 1, 5];
        let mut rng = rng_from_seed(0);
        assert_eq!(
            sample_without_replacement(&pool, 5, &mut rng),
            pool.to_vec()
        );
        assert_eq!(
            sample_without_replacement(&pool, 9, &mut rng),
            pool.to_vec()
        );
    }

    #[test]
    fn sample_has_no_repeats_and_is_deterministic() {
        let pool: Vec<u32> = (0..100).collect();
        let a = sample_without_replacement(&pool, 30, &mut rng_from_seed(11));
        let b = sample_without_replacement(&pool, 30, &mut rng_from_seed(11));
        assert_eq!(a, b);
        let mut seen = a.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 30);
    }

    #[test]
    fn sample_is_roughly_uniform() {
        // Drawing 2 of 4 repeatedly: each element should appear ~ half the time.
        let pool = [0usize, 1, 2, 3];
        let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
        for s in 0..4000u64 {
            let mut rng = rng_from_seed(mix(99, &[s]));
            for v in sample_without_replacement(&pool, 2, &mut rng) {
                *counts.entry(v).or_default() += 1;
            }
        }
        for (_, c) in counts {
            let frac = f64::from(c) / 8000.0;
            assert!((frac - 0.25).abs() < 0.02, "frac {frac}");
        }
    }
}
