//! Temperature-based data sampling across language pairs.
//!
//! With `p_l = n_l / sum(n)` the temperature-adjusted weight of pair `l` is
//! `p_l^alpha`. Anchoring the largest pair to `max_size` gives
//!
//! ```text
//! s_l = max_size * p_l^alpha / p_max^alpha = max_size * (n_l / n_max)^alpha
//! ```
//!
//! so the corpus total cancels out and only the ratio to the largest pair
//! matters. `alpha = 1` is proportional sampling, `alpha = 0` is uniform.

use std::collections::BTreeMap;

use rand::Rng;

use crate::model::{LanguagePairKey, SamplingSpec};
use crate::pipeline::ops::random_subset;

/// Target size per language pair; the largest pair gets exactly `max_size`.
pub fn temperature_sizes(spec: &SamplingSpec) -> BTreeMap<LanguagePairKey, u64> {
    let n_max = spec.sizes().values().copied().max().unwrap_or(1);
    spec.sizes()
        .iter()
        .map(|(key, &n)| {
            (
                key.clone(),
                target_size(spec.alpha(), spec.max_size(), n, n_max),
            )
        })
        .collect()
}

fn target_size(alpha: f64, max_size: u64, n: u64, n_max: u64) -> u64 {
    if n == n_max || alpha == 0.0 {
        return max_size;
    }
    if alpha == 1.0 {
        // exact integer rounding, half up
        let num = max_size as u128 * n as u128;
        return ((2 * num + n_max as u128) / (2 * n_max as u128)) as u64;
    }
    let ratio = n as f64 / n_max as f64;
    (max_size as f64 * ratio.powf(alpha)).round() as u64
}

/// Draws `target` rows from `rows`.
///
/// Downsampling is a seeded sample without replacement. Oversampling emits
/// `target / n` full copies followed by a seeded sample of the remainder.
/// Sampled rows keep their input order.
pub fn materialize<T: Clone, R: Rng>(rows: &[T], target: u64, rng: &mut R) -> Vec<T> {
    let n = rows.len() as u64;
    if n == 0 {
        return Vec::new();
    }
    let copies = target / n;
    let remainder = (target % n) as usize;
    let mut out = Vec::with_capacity(target.min(1 << 24) as usize);
    for _ in 0..copies {
        out.extend_from_slice(rows);
    }
    out.extend(random_subset(rows.iter().cloned(), remainder, rng));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(alpha: f64, max_size: u64, sizes: &[(&str, u64)]) -> SamplingSpec {
        let sizes = sizes
            .iter()
            .map(|(k, n)| (k.parse().unwrap(), *n))
            .collect();
        SamplingSpec::new(alpha, max_size, sizes).unwrap()
    }

    fn size_of(sizes: &BTreeMap<LanguagePairKey, u64>, key: &str) -> u64 {
        sizes[&key.parse::<LanguagePairKey>().unwrap()]
    }

    #[test]
    fn proportional_when_alpha_is_one() {
        let s = temperature_sizes(&spec(
            1.0,
            1000,
            &[("en-fi", 300), ("en-de", 1200), ("en-sv", 7)],
        ));
        assert_eq!(size_of(&s, "en-de"), 1000);
        assert_eq!(size_of(&s, "en-fi"), 250);
        // 1000 * 7 / 1200 = 5.83
        assert_eq!(size_of(&s, "en-sv"), 6);
    }

    #[test]
    fn uniform_when_alpha_is_zero() {
        let s = temperature_sizes(&spec(0.0, 500, &[("en-fi", 3), ("en-de", 90000)]));
        assert!(s.values().all(|&v| v == 500));
    }

    #[test]
    fn fifth_root_example() {
        let s = temperature_sizes(&spec(
            0.2,
            1_000_000,
            &[("en-de", 1_000_000), ("en-se", 32)],
        ));
        // 1e6 * (32e-6)^0.2 = 1e6 * 2 * 10^-1.2 = 126191.4
        assert_eq!(size_of(&s, "en-se"), 126_191);
        assert_eq!(size_of(&s, "en-de"), 1_000_000);
    }

    #[test]
    fn materialize_down_and_over() {
        let rows: Vec<u32> = (0..10).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let down = materialize(&rows, 4, &mut rng);
        assert_eq!(down.len(), 4);
        assert!(down.windows(2).all(|w| w[0] < w[1]));

        let over = materialize(&rows, 23, &mut rng);
        assert_eq!(over.len(), 23);
        assert_eq!(&over[..10], &rows[..]);
        assert_eq!(&over[10..20], &rows[..]);
        for v in &rows {
            let c = over.iter().filter(|x| *x == v).count();
            assert!(c == 2 || c == 3);
        }
        assert!(materialize::<u32, _>(&[], 5, &mut rng).is_empty());
    }

    proptest! {
        #[test]
        fn sizes_are_monotone(
            sizes in proptest::collection::vec(1u64..1_000_000, 1..8),
            alpha in 0.0f64..=1.0,
            lower in 0.0f64..=1.0,
            max_size in 1u64..2_000_000,
        ) {
            let langs = ["aa", "bb", "cc", "dd", "ee", "ff", "gg", "hh"];
            let pairs: Vec<(String, u64)> = sizes
                .iter()
                .enumerate()
                .map(|(i, &n)| (format!("en-{}", langs[i]), n))
                .collect();
            let refs: Vec<(&str, u64)> = pairs.iter().map(|(k, n)| (k.as_str(), *n)).collect();
            let hot = temperature_sizes(&spec(alpha, max_size, &refs));
            let cold = temperature_sizes(&spec(alpha.min(lower), max_size, &refs));
            let n_max = *sizes.iter().max().unwrap();
            for (key, n) in &refs {
                let s = size_of(&hot, key);
                if *n == n_max {
                    prop_assert_eq!(s, max_size);
                }
                for (other, m) in &refs {
                    if n <= m {
                        prop_assert!(s <= size_of(&hot, other));
                    }
                }
                prop_assert!(size_of(&cold, key) >= s);
            }
        }
    }
}
