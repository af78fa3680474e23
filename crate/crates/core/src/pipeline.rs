//! Two-stage ranking: O(N) univariate scoring over the full candidate set,
//! then O(k^2) reranking of the top k by a set-aware or bivariate variant.
//! Listings below the rerank cut keep their first-stage order, so the output
//! is always a total order over all candidates.

use std::time::Instant;

use crate::aggregation::{avg_score, gbt_score, scores_to_ranking, PairLogitRow};
use crate::error::{Error, Result};
use crate::rankers::{pair_logit_matrix, PairwiseRanker, RankerVariant, VariantKind};
use crate::sim::{Listing, Query};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub first_stage: PairwiseRanker,
    /// `None` ranks by the first stage alone.
    pub second_stage: Option<RankerVariant>,
    pub rerank_top_k: usize,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rerank_top_k < 1 {
            return Err(Error::Config("rerank_top_k must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// First-stage scoring result: candidates in descending logit order plus the
/// per-candidate logits (indexed by candidate position in the input), kept
/// for reuse by the second stage.
#[derive(Debug, Clone)]
pub struct FirstStageResult {
    pub order: Vec<usize>,
    pub logits: Vec<f64>,
    pub score_calls: usize,
}

/// Scores every candidate exactly once and sorts descending (stable, ties by
/// input position).
pub fn first_stage_rank(
    ranker: &PairwiseRanker,
    query: &Query,
    candidates: &[Listing],
) -> Result<FirstStageResult> {
    if candidates.is_empty() {
        return Err(Error::Shape("cannot rank an empty candidate set".to_string()));
    }
    let mut logits = Vec::with_capacity(candidates.len());
    for listing in candidates {
        logits.push(ranker.pointwise_logit(listing, query)?);
    }
    let order = scores_to_ranking(&logits)?;
    Ok(FirstStageResult {
        order,
        logits,
        score_calls: candidates.len(),
    })
}

/// Reranks the top slice with the given variant, reusing the first-stage
/// logits. `top_candidates` and `retained_logits` are aligned and already in
/// first-stage order. Returns the new ordering as positions into
/// `top_candidates` plus the interaction count (`k(k-1)/2` unique bivariate
/// evaluations, `k(k-1)` peer interactions for the set-aware variants).
pub fn second_stage_rerank(
    variant: &RankerVariant,
    query: &Query,
    top_candidates: &[Listing],
    retained_logits: &[f64],
) -> Result<(Vec<usize>, usize)> {
    if top_candidates.len() != retained_logits.len() {
        return Err(Error::Validation(format!(
            "{} retained logits for {} candidates",
            retained_logits.len(),
            top_candidates.len()
        )));
    }
    let k = top_candidates.len();
    if k < 2 {
        return Ok(((0..k).collect(), 0));
    }
    match variant {
        RankerVariant::Pairwise(r) => {
            let mut scores = Vec::with_capacity(k);
            for listing in top_candidates {
                scores.push(r.pointwise_logit(listing, query)?);
            }
            Ok((scores_to_ranking(&scores)?, 0))
        }
        RankerVariant::TruePairwiseAvg(r) | RankerVariant::TruePairwiseGbt(r) => {
            let (matrix, evals) = pair_logit_matrix(r, query, top_candidates)?;
            let scores = (0..k)
                .map(|i| {
                    let row = PairLogitRow::from_matrix_row(i, &matrix);
                    match variant.kind() {
                        VariantKind::TruePairwiseAvg => avg_score(&row),
                        _ => gbt_score(&row),
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((scores_to_ranking(&scores)?, evals))
        }
        RankerVariant::AllPairwiseApfn(r) => {
            let cache = r.context_cache(top_candidates)?;
            let scores = (0..k)
                .map(|i| r.logit_from_cache(i, &cache, retained_logits))
                .collect::<Result<Vec<f64>>>()?;
            Ok((scores_to_ranking(&scores)?, k * (k - 1)))
        }
        RankerVariant::AllPairwiseAttn(r) => {
            let cache = r.context_cache(top_candidates)?;
            let scores = (0..k)
                .map(|i| r.logit_from_cache(i, &cache, retained_logits))
                .collect::<Result<Vec<f64>>>()?;
            Ok((scores_to_ranking(&scores)?, k * (k - 1)))
        }
    }
}

/// Full ranking outcome with per-stage instrumentation.
#[derive(Debug, Clone)]
pub struct RankOutcome {
    /// Candidate positions in final rank order (a permutation of the input).
    pub ordering: Vec<usize>,
    /// First-stage logits indexed by candidate position.
    pub first_stage_logits: Vec<f64>,
    pub stage1_score_calls: usize,
    pub stage2_interactions: usize,
    pub stage1_nanos: u128,
    pub stage2_nanos: u128,
}

/// Composes the two stages: first-stage scores everything, the second stage
/// (when configured) reorders the top `rerank_top_k`, and the tail keeps its
/// first-stage order.
pub fn rank(config: &PipelineConfig, query: &Query, candidates: &[Listing]) -> Result<RankOutcome> {
    config.validate()?;
    let stage1_start = Instant::now();
    let first = first_stage_rank(&config.first_stage, query, candidates)?;
    let stage1_nanos = stage1_start.elapsed().as_nanos();

    let mut ordering = first.order.clone();
    let mut stage2_interactions = 0;
    let stage2_start = Instant::now();
    if let Some(variant) = &config.second_stage {
        let k = config.rerank_top_k.min(candidates.len());
        if k >= 2 {
            let top: Vec<Listing> = first.order[..k]
                .iter()
                .map(|&pos| candidates[pos].clone())
                .collect();
            let retained: Vec<f64> =
                first.order[..k].iter().map(|&pos| first.logits[pos]).collect();
            let (local_order, interactions) =
                second_stage_rerank(variant, query, &top, &retained)?;
            stage2_interactions = interactions;
            let reranked: Vec<usize> = local_order.iter().map(|&i| first.order[i]).collect();
            ordering[..k].copy_from_slice(&reranked);
        }
    }
    let stage2_nanos = stage2_start.elapsed().as_nanos();

    Ok(RankOutcome {
        ordering,
        first_stage_logits: first.logits,
        stage1_score_calls: first.score_calls,
        stage2_interactions,
        stage1_nanos,
        stage2_nanos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Activation;
    use crate::rankers::{AllPairwiseRanker, MultivariateConfig, TruePairwiseRanker};
    use crate::seeds::mix;
    use crate::sim::{generate_listings, sample_query, DEFAULT_FEATURE_WIDTH};

    const F: usize = DEFAULT_FEATURE_WIDTH;
    const Q: usize = 2;

    fn scorer(seed: u64) -> PairwiseRanker {
        PairwiseRanker::init(F, Q, &[8], Activation::Relu, seed).unwrap()
    }

    fn toy_multivariate(seed: u64) -> MultivariateConfig {
        MultivariateConfig {
            k_width: 4,
            e_width: 4,
            feature_net_hidden: vec![6],
            head_hidden: vec![6],
            activation: Activation::Relu,
            seed,
            residual: true,
        }
    }

    #[test]
    fn single_candidate_ranks_first() {
        let config = PipelineConfig {
            first_stage: scorer(1),
            second_stage: None,
            rerank_top_k: 10,
        };
        let candidates = generate_listings(1, F, 2).unwrap();
        let outcome = rank(&config, &sample_query(3), &candidates).unwrap();
        assert_eq!(outcome.ordering, vec![0]);
        assert_eq!(outcome.stage1_score_calls, 1);
    }

    #[test]
    fn first_stage_scores_each_candidate_exactly_once() {
        let candidates = generate_listings(17, F, 4).unwrap();
        let first = first_stage_rank(&scorer(5), &sample_query(6), &candidates).unwrap();
        assert_eq!(first.score_calls, 17);
        assert_eq!(first.logits.len(), 17);
    }

    #[test]
    fn first_stage_order_matches_recomputed_argsort() {
        let ranker = scorer(7);
        let query = sample_query(8);
        let candidates = generate_listings(25, F, 9).unwrap();
        let first = first_stage_rank(&ranker, &query, &candidates).unwrap();
        // Oracle: recompute logits one by one and argsort with the same
        // tie-break.
        let mut oracle: Vec<(usize, f64)> = candidates
            .iter()
            .enumerate()
            .map(|(i, l)| (i, ranker.pointwise_logit(l, &query).unwrap()))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let expected: Vec<usize> = oracle.into_iter().map(|(i, _)| i).collect();
        assert_eq!(first.order, expected);
    }

    #[test]
    fn rerank_k1_changes_nothing() {
        let tp = TruePairwiseRanker::init(F, Q, &[6], Activation::Relu, 10).unwrap();
        let config = PipelineConfig {
            first_stage: scorer(11),
            second_stage: Some(RankerVariant::TruePairwiseGbt(tp)),
            rerank_top_k: 1,
        };
        let query = sample_query(12);
        let candidates = generate_listings(12, F, 13).unwrap();
        let with_rerank = rank(&config, &query, &candidates).unwrap();
        let baseline = rank(
            &PipelineConfig { second_stage: None, ..config.clone() },
            &query,
            &candidates,
        )
        .unwrap();
        assert_eq!(with_rerank.ordering, baseline.ordering);
        assert_eq!(with_rerank.stage2_interactions, 0);
    }

    #[test]
    fn true_pairwise_rerank_uses_half_the_naive_evaluations() {
        let tp = TruePairwiseRanker::init(F, Q, &[6], Activation::Relu, 14).unwrap();
        let k = 9;
        let config = PipelineConfig {
            first_stage: scorer(15),
            second_stage: Some(RankerVariant::TruePairwiseAvg(tp)),
            rerank_top_k: k,
        };
        let candidates = generate_listings(20, F, 16).unwrap();
        let outcome = rank(&config, &sample_query(17), &candidates).unwrap();
        assert_eq!(outcome.stage2_interactions, k * (k - 1) / 2);
    }

    #[test]
    fn zeroed_head_second_stage_reproduces_first_stage_order_exactly() {
        let base = scorer(18);
        let apfn = AllPairwiseRanker::init(base.clone(), &toy_multivariate(19)).unwrap();
        let config = PipelineConfig {
            first_stage: base,
            second_stage: Some(RankerVariant::AllPairwiseApfn(apfn)),
            rerank_top_k: 10,
        };
        let query = sample_query(20);
        let candidates = generate_listings(15, F, 21).unwrap();
        let reranked = rank(&config, &query, &candidates).unwrap();
        let baseline = rank(
            &PipelineConfig { second_stage: None, ..config.clone() },
            &query,
            &candidates,
        )
        .unwrap();
        assert_eq!(reranked.ordering, baseline.ordering);
        assert_eq!(reranked.stage2_interactions, 10 * 9);
    }

    #[test]
    fn k_at_least_n_reranks_everything_and_tail_keeps_stage1_order() {
        let tp = TruePairwiseRanker::init(F, Q, &[8, 4], Activation::Relu, 22).unwrap();
        let query = sample_query(23);
        let candidates = generate_listings(8, F, 24).unwrap();
        let full = rank(
            &PipelineConfig {
                first_stage: scorer(25),
                second_stage: Some(RankerVariant::TruePairwiseGbt(tp.clone())),
                rerank_top_k: 100,
            },
            &query,
            &candidates,
        )
        .unwrap();
        assert_eq!(full.stage2_interactions, 8 * 7 / 2);
        let mut seen = vec![false; 8];
        for &i in &full.ordering {
            assert!(!seen[i]);
            seen[i] = true;
        }

        let partial = rank(
            &PipelineConfig {
                first_stage: scorer(25),
                second_stage: Some(RankerVariant::TruePairwiseGbt(tp)),
                rerank_top_k: 3,
            },
            &query,
            &candidates,
        )
        .unwrap();
        let baseline = rank(
            &PipelineConfig {
                first_stage: scorer(25),
                second_stage: None,
                rerank_top_k: 3,
            },
            &query,
            &candidates,
        )
        .unwrap();
        assert_eq!(partial.ordering[3..], baseline.ordering[3..]);
        let head: std::collections::HashSet<usize> = partial.ordering[..3].iter().copied().collect();
        let base_head: std::collections::HashSet<usize> =
            baseline.ordering[..3].iter().copied().collect();
        assert_eq!(head, base_head);
    }

    #[test]
    fn ranking_is_deterministic_across_calls() {
        let tp = TruePairwiseRanker::init(F, Q, &[6], Activation::Relu, mix(26, 1)).unwrap();
        let config = PipelineConfig {
            first_stage: scorer(26),
            second_stage: Some(RankerVariant::TruePairwiseGbt(tp)),
            rerank_top_k: 6,
        };
        let query = sample_query(27);
        let candidates = generate_listings(14, F, 28).unwrap();
        let a = rank(&config, &query, &candidates).unwrap();
        let b = rank(&config, &query, &candidates).unwrap();
        assert_eq!(a.ordering, b.ordering);
    }

    #[test]
    fn misaligned_retained_logits_are_rejected() {
        let tp = TruePairwiseRanker::init(F, Q, &[6], Activation::Relu, 29).unwrap();
        let candidates = generate_listings(4, F, 30).unwrap();
        let err = second_stage_rerank(
            &RankerVariant::TruePairwiseAvg(tp),
            &sample_query(31),
            &candidates,
            &[0.0; 3],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }
}
