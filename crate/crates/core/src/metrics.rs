//! Ranking evaluation: NDCG with binary relevance, a price-variance
//! diversity surrogate, and jitter-flip counting for ranking stability.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// A ranked impression reduced to what the metrics need: the final ordering
/// (a permutation of candidate positions), which position was booked, and
/// the candidate prices indexed by position.
#[derive(Debug, Clone)]
pub struct RankedImpression {
    pub ordering: Vec<usize>,
    pub booked_index: usize,
    pub prices: Vec<f64>,
}

impl RankedImpression {
    fn booked_rank(&self) -> Result<usize> {
        self.ordering
            .iter()
            .position(|&i| i == self.booked_index)
            .map(|pos| pos + 1)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "booked index {} does not appear in the ordering",
                    self.booked_index
                ))
            })
    }
}

/// NDCG with binary relevance and a single booked listing: the ideal DCG is
/// 1, so NDCG reduces to `1 / log2(1 + rank)` of the booked listing.
pub fn ndcg(impression: &RankedImpression) -> Result<f64> {
    let rank = impression.booked_rank()?;
    Ok(1.0 / ((1 + rank) as f64).log2())
}

/// NDCG truncated at `k`: zero when the booked listing ranks below the cut.
pub fn ndcg_at_k(impression: &RankedImpression, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Validation("ndcg cutoff must be >= 1".to_string()));
    }
    let rank = impression.booked_rank()?;
    if rank > k {
        return Ok(0.0);
    }
    Ok(1.0 / ((1 + rank) as f64).log2())
}

fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Price-variance diversity surrogate: the population variance of the first
/// `page_size` prices (in final rank order) normalized by the variance of
/// the whole candidate set. A constant-price set scores 0; a first page that
/// is the whole set scores 1.
pub fn price_variance_diversity(prices_in_rank_order: &[f64], page_size: usize) -> Result<f64> {
    if page_size == 0 {
        return Err(Error::Validation("page size must be >= 1".to_string()));
    }
    if page_size > prices_in_rank_order.len() {
        return Err(Error::Validation(format!(
            "page size {} exceeds candidate count {}",
            page_size,
            prices_in_rank_order.len()
        )));
    }
    let full = population_variance(prices_in_rank_order);
    if full == 0.0 {
        return Ok(0.0);
    }
    Ok(population_variance(&prices_in_rank_order[..page_size]) / full)
}

/// Counts ranking flips between two top-`k` slices: ids that entered the
/// jittered top-k without having been in the original top-k. Ids missing
/// from the other side's full ranking are excluded — jitter also changes
/// which listings exist at all, and availability churn is not a ranking
/// flip.
pub fn count_flips(original_ranked: &[u64], jittered_ranked: &[u64], k: usize) -> Result<usize> {
    if k > original_ranked.len() || k > jittered_ranked.len() {
        return Err(Error::Validation(format!(
            "k = {k} exceeds a ranking length ({} / {})",
            original_ranked.len(),
            jittered_ranked.len()
        )));
    }
    let original_all: HashSet<u64> = original_ranked.iter().copied().collect();
    let original_top: HashSet<u64> = original_ranked[..k].iter().copied().collect();
    Ok(jittered_ranked[..k]
        .iter()
        .filter(|id| original_all.contains(id) && !original_top.contains(id))
        .count())
}

/// Mean NDCG over a set of ranked impressions.
pub fn mean_ndcg(impressions: &[RankedImpression]) -> Result<f64> {
    if impressions.is_empty() {
        return Err(Error::Validation("cannot average over zero impressions".to_string()));
    }
    let total: f64 = impressions.iter().map(ndcg).collect::<Result<Vec<_>>>()?.iter().sum();
    Ok(total / impressions.len() as f64)
}
