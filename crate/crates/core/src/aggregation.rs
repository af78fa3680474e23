//! Collapsing a listing's pair logits into one real score.
//!
//! A bivariate comparator on its own cannot be fed to a sorting algorithm: it
//! may not be transitive. Both aggregations here map the `N-1` pair logits of
//! a listing to a single real value, and sorting those values restores a
//! total order (reflexive, transitive, antisymmetric, strongly connected)
//! with a deterministic tie-break.

use crate::error::{Error, Result};

/// One listing's pair logits against every other listing, in canonical
/// ascending-index order of the opponents so that floating-point summation is
/// reproducible regardless of how the logits were gathered.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLogitRow {
    pub listing_index: usize,
    pub logits_vs_others: Vec<f64>,
}

impl PairLogitRow {
    pub fn new(listing_index: usize, logits_vs_others: Vec<f64>) -> Self {
        Self { listing_index, logits_vs_others }
    }

    /// Extracts row `i` of a full anti-symmetric logit matrix, skipping the
    /// diagonal; opponents appear in ascending index order.
    pub fn from_matrix_row(i: usize, matrix: &[Vec<f64>]) -> Self {
        let logits = matrix[i]
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, &g)| g)
            .collect();
        Self::new(i, logits)
    }

    fn check_finite(&self) -> Result<()> {
        if let Some(bad) = self.logits_vs_others.iter().find(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "pair logit for listing {} is not finite: {bad}",
                self.listing_index
            )));
        }
        Ok(())
    }
}

/// Largest f64 strictly below 1.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

/// Generalized Bradley-Terry score: `1 / (1 + sum_{j != i} e^{-g_ij})`.
///
/// Summation runs in canonical opponent order. The sum of exponentials is
/// evaluated in log space when any `-g` exceeds 700 so extreme logits cannot
/// overflow, and the result is clamped into the open interval `(0, 1)`.
pub fn gbt_score(row: &PairLogitRow) -> Result<f64> {
    row.check_finite()?;
    let negs: Vec<f64> = row.logits_vs_others.iter().map(|g| -g).collect();
    if negs.is_empty() {
        return Ok(ONE_BELOW);
    }
    let max = negs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let score = if max > 700.0 {
        // log-sum-exp guard: score = sigmoid(-L), L = max + ln(sum e^{x - max})
        let sum: f64 = negs.iter().map(|x| (x - max).exp()).sum();
        let log_sum = max + sum.ln();
        crate::net::sigmoid_stable(-log_sum)
    } else {
        let sum: f64 = negs.iter().map(|x| x.exp()).sum();
        1.0 / (1.0 + sum)
    };
    Ok(score.clamp(f64::MIN_POSITIVE, ONE_BELOW))
}

/// Arithmetic mean of the pair logits in canonical order.
pub fn avg_score(row: &PairLogitRow) -> Result<f64> {
    row.check_finite()?;
    if row.logits_vs_others.is_empty() {
        return Ok(0.0);
    }
    Ok(row.logits_vs_others.iter().sum::<f64>() / row.logits_vs_others.len() as f64)
}

/// Descending stable sort of scores; ties break by ascending listing index.
/// Returns the permutation: `result[rank] = listing index`.
pub fn scores_to_ranking(scores: &[f64]) -> Result<Vec<usize>> {
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("score is not finite: {bad}")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).expect("finite scores compare")
    });
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gbt_two_listings_tied_is_half() {
        let row = PairLogitRow::new(0, vec![0.0]);
        assert!((gbt_score(&row).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gbt_dominant_listing_approaches_one() {
        let row = PairLogitRow::new(0, vec![20.0, 20.0, 20.0]);
        let score = gbt_score(&row).unwrap();
        let expected = 1.0 / (1.0 + 3.0 * (-20.0f64).exp());
        assert!((score - expected).abs() < 1e-15);
        assert!(score < 1.0 && score > 0.999_999_99);
    }

    #[test]
    fn gbt_stays_in_open_interval_for_extreme_logits() {
        let hi = gbt_score(&PairLogitRow::new(0, vec![800.0, 900.0])).unwrap();
        assert!(hi > 0.0 && hi < 1.0);
        let lo = gbt_score(&PairLogitRow::new(0, vec![-800.0])).unwrap();
        assert!(lo > 0.0 && lo < 1.0);
    }

    #[test]
    fn gbt_rejects_non_finite_logits() {
        let row = PairLogitRow::new(0, vec![f64::NAN]);
        assert!(matches!(gbt_score(&row).unwrap_err(), Error::Numeric(_)));
    }

    #[test]
    fn avg_score_basics() {
        assert_eq!(avg_score(&PairLogitRow::new(0, vec![1.0, 2.0, 3.0])).unwrap(), 2.0);
        assert_eq!(avg_score(&PairLogitRow::new(0, vec![0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn avg_scores_of_antisymmetric_matrix_cancel() {
        let mut rng_state = 0x12345u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        let n = 6;
        let mut matrix = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let g = next();
                matrix[i][j] = g;
                matrix[j][i] = -g;
            }
        }
        let total: f64 = (0..n)
            .map(|i| avg_score(&PairLogitRow::from_matrix_row(i, &matrix)).unwrap() * (n - 1) as f64)
            .sum();
        assert!(total.abs() < 1e-9, "sum of averaged logits {total}");
    }

    #[test]
    fn ranking_sorts_descending_with_index_tie_break() {
        assert_eq!(scores_to_ranking(&[0.3, 0.9, 0.1]).unwrap(), vec![1, 0, 2]);
        assert_eq!(scores_to_ranking(&[0.5, 0.5, 0.5]).unwrap(), vec![0, 1, 2]);
        assert!(matches!(
            scores_to_ranking(&[f64::INFINITY - f64::INFINITY]).unwrap_err(),
            Error::Numeric(_)
        ));
    }

    #[test]
    fn n2_gbt_ranking_matches_sign_of_the_single_logit() {
        for g in [-3.0, -0.25, 0.7, 4.0] {
            let s0 = gbt_score(&PairLogitRow::new(0, vec![g])).unwrap();
            let s1 = gbt_score(&PairLogitRow::new(1, vec![-g])).unwrap();
            let ranking = scores_to_ranking(&[s0, s1]).unwrap();
            let by_sign = if g > 0.0 { vec![0, 1] } else { vec![1, 0] };
            assert_eq!(ranking, by_sign, "g = {g}");
        }
    }

    #[test]
    fn gbt_is_monotone_in_each_logit() {
        let base = PairLogitRow::new(0, vec![0.4, -1.2, 2.0, 0.0]);
        let s = gbt_score(&base).unwrap();
        for i in 0..base.logits_vs_others.len() {
            let mut bumped = base.clone();
            bumped.logits_vs_others[i] += 0.1;
            assert!(gbt_score(&bumped).unwrap() > s, "raising logit {i} must not lower the score");
        }
    }

    proptest! {
        #[test]
        fn ranking_is_a_valid_permutation_with_non_increasing_scores(
            scores in proptest::collection::vec(-1e6f64..1e6, 1..40)
        ) {
            let order = scores_to_ranking(&scores).unwrap();
            let mut seen = vec![false; scores.len()];
            for &idx in &order {
                prop_assert!(!seen[idx]);
                seen[idx] = true;
            }
            for pair in order.windows(2) {
                prop_assert!(scores[pair[0]] >= scores[pair[1]]);
            }
        }

        /// Gathering the logits in any opponent order and re-canonicalizing
        /// leaves both aggregations bit-identical.
        #[test]
        fn aggregation_is_invariant_to_gather_order(
            logits in proptest::collection::vec(-30.0f64..30.0, 2..12),
            shuffle_seed in 0u64..1000,
        ) {
            let canonical = PairLogitRow::new(0, logits.clone());
            // Gather in a shuffled order, then restore canonical order.
            let mut order: Vec<usize> = (0..logits.len()).collect();
            let mut state = shuffle_seed.wrapping_add(1);
            for k in (1..order.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let m = (state >> 33) as usize % (k + 1);
                order.swap(k, m);
            }
            let mut gathered: Vec<(usize, f64)> =
                order.iter().map(|&j| (j, logits[j])).collect();
            gathered.sort_by_key(|(j, _)| *j);
            let recanonical = PairLogitRow::new(0, gathered.into_iter().map(|(_, g)| g).collect());
            prop_assert_eq!(
                gbt_score(&canonical).unwrap().to_bits(),
                gbt_score(&recanonical).unwrap().to_bits()
            );
            prop_assert_eq!(
                avg_score(&canonical).unwrap().to_bits(),
                avg_score(&recanonical).unwrap().to_bits()
            );
        }
    }
}
