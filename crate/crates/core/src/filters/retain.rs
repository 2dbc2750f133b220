//! Keep the best-scoring fraction of a corpus.

use crate::error::{Error, Result};

/// Number of units kept for `fraction` of `n`, i.e. `ceil(fraction * n)`.
///
/// The product is nudged down by a relative epsilon first so that values
/// like `0.07 * 100 = 7.000000000000001` do not round up to 8.
pub fn retained_count(n: usize, fraction: f64) -> usize {
    let exact = fraction * n as f64;
    let k = (exact - exact.abs() * 1e-12).ceil();
    (k.max(0.0) as usize).min(n)
}

/// Indices (ascending) of the `ceil(fraction * n)` highest scores.
/// Ties at the cut go to the earlier position.
pub fn retained_indices(scores: &[f64], fraction: f64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "retention fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Invalid(format!("score {} is not finite", i + 1)));
    }
    let keep = retained_count(scores.len(), fraction);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable: equal scores keep their original order
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order.truncate(keep);
    order.sort_unstable();
    Ok(order)
}

/// Keeps the best-scoring units (higher is better) in their original order.
pub fn ce_retain<T>(units: Vec<T>, scores: &[f64], fraction: f64) -> Result<Vec<T>> {
    if units.len() != scores.len() {
        return Err(Error::LineCountMismatch {
            left: units.len(),
            right: scores.len(),
        });
    }
    let kept = retained_indices(scores, fraction)?;
    let mut next = kept.iter().peekable();
    Ok(units
        .into_iter()
        .enumerate()
        .filter_map(|(i, u)| {
            if next.peek() == Some(&&i) {
                next.next();
                Some(u)
            } else {
                None
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ninety_five_of_hundred() {
        let scores: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let kept = ce_retain((0..100).collect(), &scores, 0.95).unwrap();
        assert_eq!(kept.len(), 95);
        assert_eq!(kept, (5..100).collect::<Vec<_>>());
    }

    #[test]
    fn full_fraction_is_identity() {
        let units = vec!["c", "a", "b"];
        assert_eq!(
            ce_retain(units.clone(), &[0.0, 2.0, -1.0], 1.0).unwrap(),
            units
        );
    }

    #[test]
    fn ties_prefer_earlier_positions() {
        let kept = retained_indices(&[1.0, 5.0, 1.0, 1.0], 0.5).unwrap();
        assert_eq!(kept, [0, 1]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            ce_retain(vec![1, 2], &[0.0], 0.5),
            Err(Error::LineCountMismatch { left: 2, right: 1 })
        ));
        assert!(ce_retain(vec![1], &[f64::NAN], 0.5).is_err());
        assert!(ce_retain(vec![1], &[0.0], 0.0).is_err());
        assert!(ce_retain(vec![1], &[0.0], 1.5).is_err());
    }

    #[test]
    fn count_rounding() {
        assert_eq!(retained_count(100, 0.07), 7);
        assert_eq!(retained_count(100, 0.95), 95);
        assert_eq!(retained_count(3, 0.5), 2);
        assert_eq!(retained_count(1, 0.01), 1);
        assert_eq!(retained_count(0, 0.5), 0);
    }

    proptest! {
        #[test]
        fn kept_scores_dominate_dropped(scores in proptest::collection::vec(-100i32..100, 1..200), pct in 1u32..=100) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let fraction = f64::from(pct) / 100.0;
            let kept = retained_indices(&scores, fraction).unwrap();
            // exact ceil over integers: ceil(pct * n / 100)
            let expected = (pct as usize * scores.len()).div_ceil(100);
            prop_assert_eq!(kept.len(), expected);
            let min_kept = kept.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
            let max_dropped = (0..scores.len())
                .filter(|i| kept.binary_search(i).is_err())
                .map(|i| scores[i])
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(min_kept >= max_dropped);
        }
    }
}
