//! Reproducible random streams.
//!
//! Every random draw comes from a ChaCha8 stream identified by a 64-bit
//! key and a 64-bit stream id. ChaCha is counter based: distinct stream
//! ids under one key are independent, and a stream's output does not
//! depend on which thread consumes it or in what order other streams are
//! used.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer, used to turn structured keys into seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream `stream` under key `key`.
pub fn stream(key: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(stream);
    rng
}

/// Uniform draw in `[0, 1)`.
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Inverse-CDF draw from non-negative `weights` (not necessarily summing
/// to one): the first index whose cumulative weight exceeds `u · total`.
/// Round-off at the top end falls back to the last positive weight.
pub fn sample_index(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .expect("at least one positive weight")
}

/// Inverse-CDF draw against a precomputed cumulative table whose last entry
/// is the total mass.
#[inline]
pub fn sample_cumulative(cumulative: &[f64], u: f64) -> usize {
    let target = u * cumulative[cumulative.len() - 1];
    let i = cumulative.partition_point(|&c| c <= target);
    if i < cumulative.len() {
        i
    } else {
        // Unreachable for u < 1 unless the table ends in zero-weight
        // entries; pick the last index that carries mass.
        last_positive(cumulative)
    }
}

fn last_positive(cumulative: &[f64]) -> usize {
    (0..cumulative.len())
        .rev()
        .find(|&i| cumulative[i] > if i == 0 { 0.0 } else { cumulative[i - 1] })
        .expect("at least one positive weight")
}

/// Running sums of `weights`.
pub fn cumulative(weights: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .scan(0.0, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::RngCore;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |key, id| {
            let mut r = stream(key, id);
            (0..4).map(|_| r.next_u64()).collect::<Vec<u64>>()
        };
        assert_eq!(draw(7, 3), draw(7, 3));
        assert_ne!(draw(7, 3), draw(7, 4));
        assert_ne!(draw(7, 3), draw(8, 3));
    }

    #[test]
    fn inverse_cdf_boundaries() {
        let w = [0.0, 0.25, 0.0, 0.75, 0.0];
        assert_eq!(sample_index(&w, 0.0), 1);
        assert_eq!(sample_index(&w, 0.2499), 1);
        assert_eq!(sample_index(&w, 0.25), 3);
        assert_eq!(sample_index(&w, 0.999_999), 3);
        let c = cumulative(&w);
        assert_eq!(sample_cumulative(&c, 0.0), 1);
        assert_eq!(sample_cumulative(&c, 0.25), 3);
        assert_eq!(sample_cumulative(&c, 0.999_999), 3);
    }

    proptest! {
        #[test]
        fn cumulative_and_linear_search_agree(
            w in proptest::collection::vec(0.0f64..1.0, 1..8),
            u in 0.0f64..1.0,
        ) {
            prop_assume!(w.iter().sum::<f64>() > 0.0);
            let i = sample_index(&w, u);
            prop_assert!(w[i] > 0.0);
            prop_assert_eq!(i, sample_cumulative(&cumulative(&w), u));
        }
    }
}
