//! Uniform negative sampling from a user's non-interacted items.

use rand::Rng;

use crate::error::{Error, Result};

/// Draws `neg_ratio × |positives|` items uniformly (with replacement) from
/// `0..item_count` minus `positives`, which must be sorted.
pub fn sample_negatives<R: Rng + ?Sized>(
    positives: &[usize],
    neg_ratio: usize,
    item_count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let count = neg_ratio * positives.len();
    let mut out = Vec::with_capacity(count);
    sample_into(positives, count, item_count, rng, &mut out)?;
    Ok(out)
}

/// Appends `count` uniform draws from the complement of `positives`.
pub(crate) fn sample_into<R: Rng + ?Sized>(
    positives: &[usize],
    count: usize,
    item_count: usize,
    rng: &mut R,
    out: &mut Vec<usize>,
) -> Result<()> {
    debug_assert!(positives.windows(2).all(|w| w[0] < w[1]), "positives must be sorted");
    let legal = item_count.saturating_sub(positives.len());
    if legal == 0 {
        return Err(Error::Data(format!(
            "cannot sample negatives: positives cover all {item_count} items"
        )));
    }
    if count == 0 {
        return Ok(());
    }
    if positives.len() * 2 <= item_count {
        // Rejection sampling accepts with probability ≥ 1/2.
        while out.len() < count {
            let candidate = rng.random_range(0..item_count);
            if positives.binary_search(&candidate).is_err() {
                out.push(candidate);
            }
        }
    } else {
        let mut complement = Vec::with_capacity(legal);
        let mut pos = positives.iter().peekable();
        for i in 0..item_count {
            if pos.peek() == Some(&&i) {
                pos.next();
            } else {
                complement.push(i);
            }
        }
        for _ in 0..count {
            out.push(complement[rng.random_range(0..complement.len())]);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forced_choice() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(sample_negatives(&[0, 2], 1, 3, &mut rng).unwrap(), vec![1, 1]);
        }
    }

    #[test]
    fn never_returns_positives() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let positives: Vec<usize> = (0..50).step_by(3).collect();
        for ratio in 1..5 {
            let negs = sample_negatives(&positives, ratio, 50, &mut rng).unwrap();
            assert_eq!(negs.len(), ratio * positives.len());
            assert!(negs.iter().all(|n| positives.binary_search(n).is_err() && *n < 50));
        }
        // Dense positives take the complement path.
        let dense: Vec<usize> = (0..48).collect();
        let negs = sample_negatives(&dense, 4, 50, &mut rng).unwrap();
        assert!(negs.iter().all(|&n| n == 48 || n == 49));
    }

    #[test]
    fn full_coverage_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(sample_negatives(&[0, 1, 2], 4, 3, &mut rng).is_err());
    }

    fn draw_counts(draws: usize, seed: u64) -> [usize; 100] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = [0usize; 100];
        let mut out = Vec::new();
        sample_into(&[37], draws, 100, &mut rng, &mut out).unwrap();
        for i in out {
            counts[i] += 1;
        }
        counts
    }

    #[test]
    fn frequencies_pass_chi_square() {
        // 10⁵ draws over 100 items with one positive: 99 legal items.
        let counts = draw_counts(100_000, 3);
        assert_eq!(counts[37], 0);
        let expected = 100_000.0 / 99.0;
        let chi2: f64 = counts
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 37)
            .map(|(_, &c)| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 98 degrees of freedom; the 0.999 quantile is about 148.
        assert!(chi2 < 148.0, "chi2 {chi2}");
    }

    #[test]
    fn every_item_within_five_percent_of_uniform() {
        // At 10⁶ draws a ±5% band is about five standard deviations wide.
        let counts = draw_counts(1_000_000, 4);
        assert_eq!(counts[37], 0);
        let expected = 1_000_000.0 / 99.0;
        for (i, &c) in counts.iter().enumerate().filter(|(i, _)| *i != 37) {
            let rel = (c as f64 - expected).abs() / expected;
            assert!(rel < 0.05, "item {i}: {c} vs {expected}");
        }
    }
}
