//! The ranking model families.
//!
//! Three tiers, in increasing awareness of context:
//!
//! - [`PairwiseRanker`]: a univariate scorer `f(listing, query)`. The logit of
//!   a pair is the score difference, so all pairwise logits telescope
//!   (collinearity) and ranking is a plain sort of `N` scores.
//! - [`TruePairwiseRanker`]: a bivariate comparator `g(a, b) = h(a, b) -
//!   h(b, a)`, anti-commutative by construction, able to express pair
//!   interactions that no univariate scorer can.
//! - [`AllPairwiseRanker`] / [`AttentionRanker`]: multivariate scorers that
//!   see the whole candidate set. Per-listing superiority and similarity
//!   features (or an attention context) feed a logit head whose output is
//!   added as a residual to the stable first-stage logit.

use std::fmt;
use std::str::FromStr;

use crate::aggregation::{avg_score, gbt_score, PairLogitRow};
use crate::error::{Error, Result};
use crate::net::{net_init, softmax, Activation, FeedForwardNet, LinearMap, NetConfig};
use crate::seeds::mix;
use crate::sim::{Listing, Query};

fn check_widths(feature_width: usize, query_width: usize, listing: &Listing, query: &Query) -> Result<()> {
    if listing.features.len() != feature_width {
        return Err(Error::Shape(format!(
            "listing {} has {} features, ranker expects {}",
            listing.id,
            listing.features.len(),
            feature_width
        )));
    }
    if query.features.len() != query_width {
        return Err(Error::Shape(format!(
            "query has {} features, ranker expects {}",
            query.features.len(),
            query_width
        )));
    }
    Ok(())
}

// --- pairwise ---------------------------------------------------------------

/// Univariate first-stage scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseRanker {
    pub f: FeedForwardNet,
    pub feature_width: usize,
    pub query_width: usize,
}

impl PairwiseRanker {
    /// Builds `f` with widths `[feature + query, hidden.., 1]`.
    pub fn init(
        feature_width: usize,
        query_width: usize,
        hidden: &[usize],
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut widths = vec![feature_width + query_width];
        widths.extend_from_slice(hidden);
        widths.push(1);
        Ok(Self {
            f: net_init(NetConfig::new(widths, activation, seed))?,
            feature_width,
            query_width,
        })
    }

    pub(crate) fn scorer_input(&self, listing: &Listing, query: &Query) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.feature_width + self.query_width);
        input.extend_from_slice(&listing.features);
        input.extend_from_slice(&query.features);
        input
    }

    /// The first-stage logit `f(listing, query)`.
    pub fn pointwise_logit(&self, listing: &Listing, query: &Query) -> Result<f64> {
        check_widths(self.feature_width, self.query_width, listing, query)?;
        Ok(self.f.forward(&self.scorer_input(listing, query))?[0])
    }

    /// Pairwise logit as the score difference `f(a) - f(b)`.
    pub fn pairwise_logit(&self, a: &Listing, b: &Listing, query: &Query) -> Result<f64> {
        Ok(self.pointwise_logit(a, query)? - self.pointwise_logit(b, query)?)
    }

    pub fn parameter_count(&self) -> usize {
        self.f.parameter_count()
    }
}

// --- true pairwise ----------------------------------------------------------

/// Bivariate comparator built from one interaction net `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruePairwiseRanker {
    pub h: FeedForwardNet,
    pub feature_width: usize,
    pub query_width: usize,
}

impl TruePairwiseRanker {
    /// Builds `h` with widths `[2 * feature + query, hidden.., 1]`.
    pub fn init(
        feature_width: usize,
        query_width: usize,
        hidden: &[usize],
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut widths = vec![2 * feature_width + query_width];
        widths.extend_from_slice(hidden);
        widths.push(1);
        Ok(Self {
            h: net_init(NetConfig::new(widths, activation, seed))?,
            feature_width,
            query_width,
        })
    }

    pub(crate) fn pair_input(&self, a: &Listing, b: &Listing, query: &Query) -> Vec<f64> {
        let mut input = Vec::with_capacity(2 * self.feature_width + self.query_width);
        input.extend_from_slice(&a.features);
        input.extend_from_slice(&b.features);
        input.extend_from_slice(&query.features);
        input
    }

    /// `g(a, b) = h(a, b) - h(b, a)`, computed as a single subtraction of two
    /// forward passes so that `g(a, b) == -g(b, a)` holds bitwise.
    pub fn true_pairwise_logit(&self, a: &Listing, b: &Listing, query: &Query) -> Result<f64> {
        check_widths(self.feature_width, self.query_width, a, query)?;
        check_widths(self.feature_width, self.query_width, b, query)?;
        let forward = self.h.forward(&self.pair_input(a, b, query))?[0];
        let reverse = self.h.forward(&self.pair_input(b, a, query))?[0];
        Ok(forward - reverse)
    }

    pub fn parameter_count(&self) -> usize {
        self.h.parameter_count()
    }
}

// --- all pairwise (superiority / similarity features) ------------------------

/// Widths and seeds for the multivariate rankers.
#[derive(Debug, Clone)]
pub struct MultivariateConfig {
    /// Superiority/similarity feature width (K).
    pub k_width: usize,
    /// Embedding width (E).
    pub e_width: usize,
    /// Hidden widths for the per-listing nets (phi, psi, embed).
    pub feature_net_hidden: Vec<usize>,
    /// Hidden widths for the logit head.
    pub head_hidden: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    /// When false, the head's logit replaces the first-stage logit instead of
    /// being added to it (the ablation studied for ranking stability).
    pub residual: bool,
}

impl Default for MultivariateConfig {
    fn default() -> Self {
        Self {
            k_width: 16,
            e_width: 16,
            feature_net_hidden: vec![16],
            head_hidden: vec![16, 8],
            activation: Activation::Relu,
            seed: 0,
            residual: true,
        }
    }
}

/// Per-listing net outputs for one candidate set, shared by scoring and
/// training passes.
#[derive(Debug, Clone)]
pub struct ApfnCache {
    pub phi_sup: Vec<Vec<f64>>,
    pub phi_sim: Vec<Vec<f64>>,
    pub embeds: Vec<Vec<f64>>,
}

/// Set-aware ranker: superiority and similarity features aggregated with
/// listing-dependent weights, feeding a residual logit head.
#[derive(Debug, Clone, PartialEq)]
pub struct AllPairwiseRanker {
    pub base: PairwiseRanker,
    pub phi_sup: FeedForwardNet,
    pub psi_embed: FeedForwardNet,
    pub phi_sim: FeedForwardNet,
    pub beta_sup: Vec<f64>,
    pub beta_sim: Vec<f64>,
    pub apln: FeedForwardNet,
    pub k_width: usize,
    pub e_width: usize,
    pub residual: bool,
}

impl AllPairwiseRanker {
    /// Builds the feature nets and the logit head around an existing (often
    /// already trained) first-stage ranker. The head's output layer starts at
    /// zero so the initial ranking equals the first-stage ranking exactly.
    pub fn init(base: PairwiseRanker, cfg: &MultivariateConfig) -> Result<Self> {
        let feature_width = base.feature_width;
        let per_listing = |out: usize, stream: u64| -> Result<FeedForwardNet> {
            let mut widths = vec![feature_width];
            widths.extend_from_slice(&cfg.feature_net_hidden);
            widths.push(out);
            net_init(NetConfig::new(widths, cfg.activation, mix(cfg.seed, stream)))
        };
        let phi_sup = per_listing(cfg.k_width, 1)?;
        let psi_embed = per_listing(cfg.e_width, 2)?;
        let phi_sim = per_listing(cfg.k_width, 3)?;
        let mut head_widths = vec![2 * cfg.k_width];
        head_widths.extend_from_slice(&cfg.head_hidden);
        head_widths.push(1);
        let mut apln = net_init(NetConfig::new(head_widths, cfg.activation, mix(cfg.seed, 4)))?;
        apln.zero_output_layer();
        Ok(Self {
            base,
            phi_sup,
            psi_embed,
            phi_sim,
            beta_sup: vec![0.0; cfg.k_width],
            beta_sim: vec![0.0; cfg.k_width],
            apln,
            k_width: cfg.k_width,
            e_width: cfg.e_width,
            residual: cfg.residual,
        })
    }

    fn check_set(&self, listings: &[Listing]) -> Result<()> {
        if listings.len() < 2 {
            return Err(Error::Shape(format!(
                "multivariate features need at least 2 listings, got {}",
                listings.len()
            )));
        }
        Ok(())
    }

    /// First-stage logits for every listing in the set.
    pub fn base_logits(&self, listings: &[Listing], query: &Query) -> Result<Vec<f64>> {
        listings.iter().map(|l| self.base.pointwise_logit(l, query)).collect()
    }

    /// Runs the per-listing nets once for the whole candidate set.
    pub fn context_cache(&self, listings: &[Listing]) -> Result<ApfnCache> {
        let mut phi_sup = Vec::with_capacity(listings.len());
        let mut phi_sim = Vec::with_capacity(listings.len());
        let mut embeds = Vec::with_capacity(listings.len());
        for l in listings {
            phi_sup.push(self.phi_sup.forward(&l.features)?);
            phi_sim.push(self.phi_sim.forward(&l.features)?);
            embeds.push(self.psi_embed.forward(&l.features)?);
        }
        Ok(ApfnCache { phi_sup, phi_sim, embeds })
    }

    /// Superiority feature of listing `i`: `beta_sup + sum_{j != i}
    /// sigmoid(f_i - f_j) * phi_sup(l_j)`, reusing the first-stage logits.
    pub fn superiority_features(
        &self,
        i: usize,
        listings: &[Listing],
        query: &Query,
    ) -> Result<Vec<f64>> {
        self.check_set(listings)?;
        let base_logits = self.base_logits(listings, query)?;
        let cache = self.context_cache(listings)?;
        Ok(self.superiority_from_cache(i, &cache, &base_logits))
    }

    pub(crate) fn superiority_from_cache(
        &self,
        i: usize,
        cache: &ApfnCache,
        base_logits: &[f64],
    ) -> Vec<f64> {
        let mut out = self.beta_sup.clone();
        for j in 0..base_logits.len() {
            if j == i {
                continue;
            }
            let s = crate::net::sigmoid_stable(base_logits[i] - base_logits[j]);
            for (o, p) in out.iter_mut().zip(&cache.phi_sup[j]) {
                *o += s * p;
            }
        }
        out
    }

    /// Similarity feature of listing `i`: softmax-normalized embedding dot
    /// products over the peers, aggregating `phi_sim(l_j)`.
    pub fn similarity_features(&self, i: usize, listings: &[Listing]) -> Result<Vec<f64>> {
        self.check_set(listings)?;
        let cache = self.context_cache(listings)?;
        self.similarity_from_cache(i, &cache)
    }

    pub(crate) fn similarity_from_cache(&self, i: usize, cache: &ApfnCache) -> Result<Vec<f64>> {
        let n = cache.embeds.len();
        let own = &cache.embeds[i];
        let peers: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let dots: Vec<f64> = peers
            .iter()
            .map(|&j| own.iter().zip(&cache.embeds[j]).map(|(a, b)| a * b).sum())
            .collect();
        let weights = softmax(&dots)?;
        let mut out = self.beta_sim.clone();
        for (w, &j) in weights.iter().zip(&peers) {
            for (o, p) in out.iter_mut().zip(&cache.phi_sim[j]) {
                *o += w * p;
            }
        }
        Ok(out)
    }

    /// Final logit of listing `i` against the rest of the set, with the
    /// first-stage logits already available. A single-listing set falls back
    /// to the first-stage logit: there are no peers to interact with.
    pub fn all_pairwise_logit_with_base(
        &self,
        i: usize,
        listings: &[Listing],
        base_logits: &[f64],
    ) -> Result<f64> {
        if listings.len() != base_logits.len() {
            return Err(Error::Validation(format!(
                "{} retained logits for {} listings",
                base_logits.len(),
                listings.len()
            )));
        }
        if listings.len() == 1 {
            return Ok(base_logits[0]);
        }
        self.check_set(listings)?;
        let cache = self.context_cache(listings)?;
        self.logit_from_cache(i, &cache, base_logits)
    }

    pub(crate) fn logit_from_cache(
        &self,
        i: usize,
        cache: &ApfnCache,
        base_logits: &[f64],
    ) -> Result<f64> {
        let sup = self.superiority_from_cache(i, cache, base_logits);
        let sim = self.similarity_from_cache(i, cache)?;
        let mut head_input = sup;
        head_input.extend_from_slice(&sim);
        let residual = self.apln.forward(&head_input)?[0];
        Ok(if self.residual { base_logits[i] + residual } else { residual })
    }

    /// Final logit of listing `i`, computing the first-stage logits in place.
    pub fn all_pairwise_logit(&self, i: usize, listings: &[Listing], query: &Query) -> Result<f64> {
        let base_logits = self.base_logits(listings, query)?;
        self.all_pairwise_logit_with_base(i, listings, &base_logits)
    }

    pub fn parameter_count(&self) -> usize {
        self.base.parameter_count() + self.trainable_parameter_count()
    }

    /// Parameters updated during second-stage training (the first stage is
    /// frozen).
    pub fn trainable_parameter_count(&self) -> usize {
        self.phi_sup.parameter_count()
            + self.psi_embed.parameter_count()
            + self.phi_sim.parameter_count()
            + self.beta_sup.len()
            + self.beta_sim.len()
            + self.apln.parameter_count()
    }
}

// --- attention variant --------------------------------------------------------

/// Set-aware ranker that replaces the superiority/similarity features with
/// single-head scaled dot-product attention over listing embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRanker {
    pub base: PairwiseRanker,
    pub embed: FeedForwardNet,
    pub proj_query: LinearMap,
    pub proj_key: LinearMap,
    pub proj_value: LinearMap,
    pub apln: FeedForwardNet,
    pub e_width: usize,
    pub residual: bool,
}

/// Per-listing embeddings for one candidate set.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub embeds: Vec<Vec<f64>>,
}

impl AttentionRanker {
    pub fn init(base: PairwiseRanker, cfg: &MultivariateConfig) -> Result<Self> {
        let feature_width = base.feature_width;
        let mut widths = vec![feature_width];
        widths.extend_from_slice(&cfg.feature_net_hidden);
        widths.push(cfg.e_width);
        let embed = net_init(NetConfig::new(widths, cfg.activation, mix(cfg.seed, 1)))?;
        let mut head_widths = vec![2 * cfg.e_width];
        head_widths.extend_from_slice(&cfg.head_hidden);
        head_widths.push(1);
        let mut apln = net_init(NetConfig::new(head_widths, cfg.activation, mix(cfg.seed, 5)))?;
        apln.zero_output_layer();
        Ok(Self {
            base,
            embed,
            proj_query: LinearMap::init(cfg.e_width, cfg.e_width, mix(cfg.seed, 2)),
            proj_key: LinearMap::init(cfg.e_width, cfg.e_width, mix(cfg.seed, 3)),
            proj_value: LinearMap::init(cfg.e_width, cfg.e_width, mix(cfg.seed, 4)),
            apln,
            e_width: cfg.e_width,
            residual: cfg.residual,
        })
    }

    pub fn base_logits(&self, listings: &[Listing], query: &Query) -> Result<Vec<f64>> {
        listings.iter().map(|l| self.base.pointwise_logit(l, query)).collect()
    }

    pub fn context_cache(&self, listings: &[Listing]) -> Result<AttentionCache> {
        let embeds = listings
            .iter()
            .map(|l| self.embed.forward(&l.features))
            .collect::<Result<_>>()?;
        Ok(AttentionCache { embeds })
    }

    /// Attention weights of listing `i` over its peers and the resulting
    /// context vector.
    pub(crate) fn attend(&self, i: usize, cache: &AttentionCache) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
        let n = cache.embeds.len();
        let q = self.proj_query.apply(&cache.embeds[i]);
        let scale = 1.0 / (self.e_width as f64).sqrt();
        let peers: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let scores: Vec<f64> = peers
            .iter()
            .map(|&j| {
                let k = self.proj_key.apply(&cache.embeds[j]);
                q.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() * scale
            })
            .collect();
        let weights = softmax(&scores)?;
        let mut context = vec![0.0; self.e_width];
        for (w, &j) in weights.iter().zip(&peers) {
            let v = self.proj_value.apply(&cache.embeds[j]);
            for (c, vv) in context.iter_mut().zip(&v) {
                *c += w * vv;
            }
        }
        Ok((peers, weights, context))
    }

    pub fn attention_logit_with_base(
        &self,
        i: usize,
        listings: &[Listing],
        base_logits: &[f64],
    ) -> Result<f64> {
        if listings.len() != base_logits.len() {
            return Err(Error::Validation(format!(
                "{} retained logits for {} listings",
                base_logits.len(),
                listings.len()
            )));
        }
        if listings.len() == 1 {
            return Ok(base_logits[0]);
        }
        if listings.len() < 2 {
            return Err(Error::Shape("attention needs at least 2 listings".to_string()));
        }
        let cache = self.context_cache(listings)?;
        self.logit_from_cache(i, &cache, base_logits)
    }

    pub(crate) fn logit_from_cache(
        &self,
        i: usize,
        cache: &AttentionCache,
        base_logits: &[f64],
    ) -> Result<f64> {
        let (_, _, context) = self.attend(i, cache)?;
        let mut head_input = cache.embeds[i].clone();
        head_input.extend_from_slice(&context);
        let residual = self.apln.forward(&head_input)?[0];
        Ok(if self.residual { base_logits[i] + residual } else { residual })
    }

    pub fn attention_logit(&self, i: usize, listings: &[Listing], query: &Query) -> Result<f64> {
        let base_logits = self.base_logits(listings, query)?;
        self.attention_logit_with_base(i, listings, &base_logits)
    }

    pub fn parameter_count(&self) -> usize {
        self.base.parameter_count() + self.trainable_parameter_count()
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.embed.parameter_count()
            + self.proj_query.parameter_count()
            + self.proj_key.parameter_count()
            + self.proj_value.parameter_count()
            + self.apln.parameter_count()
    }
}

// --- variant roster -----------------------------------------------------------

/// The five evaluated systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantKind {
    Pairwise,
    TruePairwiseAvg,
    TruePairwiseGbt,
    AllPairwiseApfn,
    AllPairwiseAttn,
}

impl VariantKind {
    pub const ALL: [VariantKind; 5] = [
        VariantKind::Pairwise,
        VariantKind::TruePairwiseAvg,
        VariantKind::TruePairwiseGbt,
        VariantKind::AllPairwiseApfn,
        VariantKind::AllPairwiseAttn,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            VariantKind::Pairwise => "pairwise",
            VariantKind::TruePairwiseAvg => "true-pairwise-avg",
            VariantKind::TruePairwiseGbt => "true-pairwise-gbt",
            VariantKind::AllPairwiseApfn => "all-pairwise-apfn",
            VariantKind::AllPairwiseAttn => "all-pairwise-attn",
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairwise" => Ok(VariantKind::Pairwise),
            "true-pairwise-avg" => Ok(VariantKind::TruePairwiseAvg),
            "true-pairwise-gbt" => Ok(VariantKind::TruePairwiseGbt),
            "all-pairwise-apfn" => Ok(VariantKind::AllPairwiseApfn),
            "all-pairwise-attn" => Ok(VariantKind::AllPairwiseAttn),
            other => Err(Error::Config(format!(
                "unknown variant {other:?}; expected one of pairwise, true-pairwise-avg, \
                 true-pairwise-gbt, all-pairwise-apfn, all-pairwise-attn"
            ))),
        }
    }
}

/// A trained (or freshly initialized) ranker of one of the five kinds. The
/// tag determines both the scoring path and, for the bivariate models, the
/// aggregation used to collapse pair logits into scores.
#[derive(Debug, Clone, PartialEq)]
pub enum RankerVariant {
    Pairwise(PairwiseRanker),
    TruePairwiseAvg(TruePairwiseRanker),
    TruePairwiseGbt(TruePairwiseRanker),
    AllPairwiseApfn(AllPairwiseRanker),
    AllPairwiseAttn(AttentionRanker),
}

impl RankerVariant {
    pub fn kind(&self) -> VariantKind {
        match self {
            RankerVariant::Pairwise(_) => VariantKind::Pairwise,
            RankerVariant::TruePairwiseAvg(_) => VariantKind::TruePairwiseAvg,
            RankerVariant::TruePairwiseGbt(_) => VariantKind::TruePairwiseGbt,
            RankerVariant::AllPairwiseApfn(_) => VariantKind::AllPairwiseApfn,
            RankerVariant::AllPairwiseAttn(_) => VariantKind::AllPairwiseAttn,
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            RankerVariant::Pairwise(r) => r.parameter_count(),
            RankerVariant::TruePairwiseAvg(r) | RankerVariant::TruePairwiseGbt(r) => {
                r.parameter_count()
            }
            RankerVariant::AllPairwiseApfn(r) => r.parameter_count(),
            RankerVariant::AllPairwiseAttn(r) => r.parameter_count(),
        }
    }

    /// Scores every listing in the set, returning `(scores, interactions)`
    /// where `interactions` counts pair evaluations: `n(n-1)/2` unique `g`
    /// calls for the bivariate models, `n * (n-1)` peer interactions for the
    /// set-aware models, and zero for the univariate model.
    pub fn score_candidates(
        &self,
        query: &Query,
        listings: &[Listing],
    ) -> Result<(Vec<f64>, usize)> {
        let n = listings.len();
        match self {
            RankerVariant::Pairwise(r) => {
                let scores = listings
                    .iter()
                    .map(|l| r.pointwise_logit(l, query))
                    .collect::<Result<_>>()?;
                Ok((scores, 0))
            }
            RankerVariant::TruePairwiseAvg(r) | RankerVariant::TruePairwiseGbt(r) => {
                let (matrix, evals) = pair_logit_matrix(r, query, listings)?;
                let scores = (0..n)
                    .map(|i| {
                        let row = PairLogitRow::from_matrix_row(i, &matrix);
                        match self {
                            RankerVariant::TruePairwiseAvg(_) => avg_score(&row),
                            _ => gbt_score(&row),
                        }
                    })
                    .collect::<Result<_>>()?;
                Ok((scores, evals))
            }
            RankerVariant::AllPairwiseApfn(r) => {
                if n == 1 {
                    return Ok((r.base_logits(listings, query)?, 0));
                }
                let base_logits = r.base_logits(listings, query)?;
                let cache = r.context_cache(listings)?;
                let scores = (0..n)
                    .map(|i| r.logit_from_cache(i, &cache, &base_logits))
                    .collect::<Result<_>>()?;
                Ok((scores, n * (n - 1)))
            }
            RankerVariant::AllPairwiseAttn(r) => {
                if n == 1 {
                    return Ok((r.base_logits(listings, query)?, 0));
                }
                let base_logits = r.base_logits(listings, query)?;
                let cache = r.context_cache(listings)?;
                let scores = (0..n)
                    .map(|i| r.logit_from_cache(i, &cache, &base_logits))
                    .collect::<Result<_>>()?;
                Ok((scores, n * (n - 1)))
            }
        }
    }

    /// The frozen first-stage ranker embedded in the set-aware variants.
    pub fn base_ranker(&self) -> Option<&PairwiseRanker> {
        match self {
            RankerVariant::AllPairwiseApfn(r) => Some(&r.base),
            RankerVariant::AllPairwiseAttn(r) => Some(&r.base),
            _ => None,
        }
    }
}

/// Full anti-symmetric pair-logit matrix: `matrix[i][j] = g(l_i, l_j)`,
/// evaluated once per unordered pair. Returns the number of unique `g`
/// evaluations, `n(n-1)/2`.
pub fn pair_logit_matrix(
    ranker: &TruePairwiseRanker,
    query: &Query,
    listings: &[Listing],
) -> Result<(Vec<Vec<f64>>, usize)> {
    let n = listings.len();
    let mut matrix = vec![vec![0.0; n]; n];
    let mut evals = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let g = ranker.true_pairwise_logit(&listings[i], &listings[j], query)?;
            matrix[i][j] = g;
            matrix[j][i] = -g;
            evals += 1;
        }
    }
    Ok((matrix, evals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_listings, sample_query, DEFAULT_FEATURE_WIDTH};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const F: usize = DEFAULT_FEATURE_WIDTH;
    const Q: usize = 2;

    fn toy_listings(n: usize, seed: u64) -> Vec<Listing> {
        generate_listings(n, F, seed).unwrap()
    }

    fn toy_query(seed: u64) -> Query {
        sample_query(seed)
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
    fn zero_weight_scorer_gives_zero_logit() {
        let mut r = PairwiseRanker::init(F, Q, &[4], Activation::Relu, 1).unwrap();
        r.f.zero_output_layer();
        let listings = toy_listings(3, 0);
        let query = toy_query(1);
        assert_eq!(r.pointwise_logit(&listings[0], &query).unwrap(), 0.0);
    }

    #[test]
    fn pointwise_logit_is_deterministic_and_matches_net_forward() {
        let r = PairwiseRanker::init(F, Q, &[8, 4], Activation::Relu, 3).unwrap();
        let listings = toy_listings(2, 5);
        let query = toy_query(6);
        let a = r.pointwise_logit(&listings[0], &query).unwrap();
        let b = r.pointwise_logit(&listings[0], &query).unwrap();
        assert_eq!(a, b);
        let mut input = listings[0].features.clone();
        input.extend_from_slice(&query.features);
        assert_eq!(a, r.f.forward(&input).unwrap()[0]);
    }

    #[test]
    fn pairwise_logit_is_antisymmetric_and_reflexive() {
        let r = PairwiseRanker::init(F, Q, &[8], Activation::Tanh, 9).unwrap();
        let listings = toy_listings(2, 5);
        let query = toy_query(6);
        assert_eq!(r.pairwise_logit(&listings[0], &listings[0], &query).unwrap(), 0.0);
        let ab = r.pairwise_logit(&listings[0], &listings[1], &query).unwrap();
        let ba = r.pairwise_logit(&listings[1], &listings[0], &query).unwrap();
        assert_eq!(ab, -ba);
    }

    #[test]
    fn pairwise_logits_telescope_over_triples() {
        let r = PairwiseRanker::init(F, Q, &[8, 4], Activation::Relu, 13).unwrap();
        let listings = toy_listings(60, 7);
        let query = toy_query(8);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let a = &listings[rng.gen_range(0..listings.len())];
            let b = &listings[rng.gen_range(0..listings.len())];
            let c = &listings[rng.gen_range(0..listings.len())];
            let ab = r.pairwise_logit(a, b, &query).unwrap();
            let bc = r.pairwise_logit(b, c, &query).unwrap();
            let ac = r.pairwise_logit(a, c, &query).unwrap();
            assert!((ab + bc - ac).abs() < 1e-12, "residual {}", ab + bc - ac);
        }
    }

    #[test]
    fn true_pairwise_is_anticommutative_bitwise() {
        let r = TruePairwiseRanker::init(F, Q, &[8, 4], Activation::Relu, 21).unwrap();
        let listings = toy_listings(40, 3);
        let query = toy_query(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a = &listings[rng.gen_range(0..listings.len())];
            let b = &listings[rng.gen_range(0..listings.len())];
            let fwd = r.true_pairwise_logit(a, b, &query).unwrap();
            let rev = r.true_pairwise_logit(b, a, &query).unwrap();
            assert_eq!((fwd + rev).to_bits(), 0.0f64.to_bits(), "fwd {fwd} rev {rev}");
        }
    }

    #[test]
    fn true_pairwise_self_comparison_is_zero() {
        let r = TruePairwiseRanker::init(F, Q, &[6], Activation::Tanh, 2).unwrap();
        let listings = toy_listings(1, 3);
        let query = toy_query(4);
        assert_eq!(
            r.true_pairwise_logit(&listings[0], &listings[0], &query).unwrap(),
            0.0
        );
    }

    #[test]
    fn forced_h_values_give_forced_g() {
        // h(a,b) = 2.0 and h(b,a) = 0.5 forces g(a,b) = 1.5 = -g(b,a); check
        // with a handcrafted single-layer net keyed on one feature.
        let mut r = TruePairwiseRanker::init(2, 0, &[], Activation::Relu, 0).unwrap();
        // h([a0,a1,b0,b1]) = w . input + bias; choose w so the two orders give
        // 2.0 and 0.5: w = [1.5, 0, 0, 0], bias = 0.5 with a0=1, b0=0.
        r.h.unflatten_params_from(&[1.5, 0.0, 0.0, 0.0, 0.5], 0).unwrap();
        let a = Listing { id: 0, price: 1.0, features: vec![1.0, 0.0], latent: None };
        let b = Listing { id: 1, price: 1.0, features: vec![0.0, 0.0], latent: None };
        let query = Query {
            bounds: crate::sim::MapBounds { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 },
            features: vec![],
            seed: 0,
        };
        assert_eq!(r.h.forward(&r.pair_input(&a, &b, &query)).unwrap()[0], 2.0);
        assert_eq!(r.h.forward(&r.pair_input(&b, &a, &query)).unwrap()[0], 0.5);
        assert_eq!(r.true_pairwise_logit(&a, &b, &query).unwrap(), 1.5);
        assert_eq!(r.true_pairwise_logit(&b, &a, &query).unwrap(), -1.5);
    }

    fn apfn_ranker(seed: u64) -> AllPairwiseRanker {
        let base = PairwiseRanker::init(F, Q, &[6], Activation::Relu, mix(seed, 100)).unwrap();
        AllPairwiseRanker::init(base, &toy_multivariate(seed)).unwrap()
    }

    #[test]
    fn superiority_of_identical_listings_is_half_sum() {
        let r = apfn_ranker(5);
        let one = toy_listings(1, 9).pop().unwrap();
        let listings: Vec<Listing> = (0..4)
            .map(|i| {
                let mut l = one.clone();
                l.id = i;
                l
            })
            .collect();
        let query = toy_query(2);
        let got = r.superiority_features(0, &listings, &query).unwrap();
        let phi = r.phi_sup.forward(&one.features).unwrap();
        let expected: Vec<f64> = r
            .beta_sup
            .iter()
            .zip(&phi)
            .map(|(b, p)| b + 0.5 * p * 3.0)
            .collect();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn similarity_of_two_listings_is_the_peer_feature() {
        let r = apfn_ranker(6);
        let listings = toy_listings(2, 10);
        let got = r.similarity_features(0, &listings).unwrap();
        let phi = r.phi_sim.forward(&listings[1].features).unwrap();
        for ((g, b), p) in got.iter().zip(&r.beta_sim).zip(&phi) {
            assert!((g - (b + p)).abs() < 1e-15);
        }
    }

    #[test]
    fn similarity_weights_are_uniform_for_identical_peers() {
        let r = apfn_ranker(7);
        let one = toy_listings(1, 11).pop().unwrap();
        let listings: Vec<Listing> = (0..5)
            .map(|i| {
                let mut l = one.clone();
                l.id = i;
                l
            })
            .collect();
        let got = r.similarity_features(2, &listings).unwrap();
        let phi = r.phi_sim.forward(&one.features).unwrap();
        for ((g, b), p) in got.iter().zip(&r.beta_sim).zip(&phi) {
            assert!((g - (b + p)).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_sets_error_or_fall_back() {
        let r = apfn_ranker(8);
        let listings = toy_listings(1, 12);
        let query = toy_query(3);
        assert!(matches!(
            r.superiority_features(0, &listings, &query).unwrap_err(),
            Error::Shape(_)
        ));
        let base = r.base_logits(&listings, &query).unwrap();
        let logit = r.all_pairwise_logit_with_base(0, &listings, &base).unwrap();
        assert_eq!(logit, base[0]);
    }

    #[test]
    fn zeroed_head_reproduces_first_stage_logits() {
        let r = apfn_ranker(9);
        let listings = toy_listings(6, 13);
        let query = toy_query(4);
        let base = r.base_logits(&listings, &query).unwrap();
        for i in 0..listings.len() {
            let logit = r.all_pairwise_logit(i, &listings, &query).unwrap();
            assert_eq!(logit, base[i], "listing {i}");
        }
    }

    /// Loop-based oracle for the full APFN logit on a small set.
    fn apfn_oracle(r: &AllPairwiseRanker, i: usize, listings: &[Listing], query: &Query) -> f64 {
        let n = listings.len();
        let f: Vec<f64> = listings
            .iter()
            .map(|l| r.base.pointwise_logit(l, query).unwrap())
            .collect();
        let mut sup = r.beta_sup.clone();
        for j in 0..n {
            if j == i {
                continue;
            }
            let s = 1.0 / (1.0 + (-(f[i] - f[j])).exp());
            let p = r.phi_sup.forward(&listings[j].features).unwrap();
            for (o, v) in sup.iter_mut().zip(&p) {
                *o += s * v;
            }
        }
        let e: Vec<Vec<f64>> = listings
            .iter()
            .map(|l| r.psi_embed.forward(&l.features).unwrap())
            .collect();
        let mut dots = Vec::new();
        for j in 0..n {
            if j == i {
                continue;
            }
            dots.push((j, e[i].iter().zip(&e[j]).map(|(a, b)| a * b).sum::<f64>()));
        }
        let max = dots.iter().map(|(_, d)| *d).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = dots.iter().map(|(_, d)| (d - max).exp()).sum();
        let mut sim = r.beta_sim.clone();
        for (j, d) in &dots {
            let w = ((d - max).exp()) / total;
            let p = r.phi_sim.forward(&listings[*j].features).unwrap();
            for (o, v) in sim.iter_mut().zip(&p) {
                *o += w * v;
            }
        }
        let mut input = sup;
        input.extend_from_slice(&sim);
        f[i] + r.apln.forward(&input).unwrap()[0]
    }

    #[test]
    fn apfn_logit_matches_loop_oracle_with_trained_like_head() {
        let mut r = apfn_ranker(10);
        // Give the head nonzero output weights so the oracle exercises the
        // full path, not just the residual identity.
        let mut flat = Vec::new();
        r.apln.flatten_params_into(&mut flat);
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for p in flat.iter_mut() {
            *p = rng.gen_range(-0.5..0.5);
        }
        r.apln.unflatten_params_from(&flat, 0).unwrap();
        let listings = toy_listings(3, 14);
        let query = toy_query(5);
        for i in 0..3 {
            let got = r.all_pairwise_logit(i, &listings, &query).unwrap();
            let want = apfn_oracle(&r, i, &listings, &query);
            assert!((got - want).abs() < 1e-12, "listing {i}: {got} vs {want}");
        }
    }

    fn shuffle_others(i: usize, listings: &[Listing], seed: u64) -> (usize, Vec<Listing>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut others: Vec<Listing> = listings
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, l)| l.clone())
            .collect();
        // Fisher-Yates.
        for k in (1..others.len()).rev() {
            let m = rng.gen_range(0..=k);
            others.swap(k, m);
        }
        let pos = rng.gen_range(0..=others.len());
        others.insert(pos, listings[i].clone());
        (pos, others)
    }

    #[test]
    fn apfn_logit_is_invariant_to_peer_permutations() {
        let mut r = apfn_ranker(11);
        let mut flat = Vec::new();
        r.apln.flatten_params_into(&mut flat);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for p in flat.iter_mut() {
            *p = rng.gen_range(-0.5..0.5);
        }
        r.apln.unflatten_params_from(&flat, 0).unwrap();
        let listings = toy_listings(10, 15);
        let query = toy_query(6);
        let reference = r.all_pairwise_logit(0, &listings, &query).unwrap();
        for s in 0..50 {
            let (pos, shuffled) = shuffle_others(0, &listings, s);
            let shuffled_logit = r.all_pairwise_logit(pos, &shuffled, &query).unwrap();
            let rel = (shuffled_logit - reference).abs() / reference.abs().max(1e-12);
            assert!(rel < 1e-9, "relative deviation {rel}");
        }
    }

    fn attn_ranker(seed: u64) -> AttentionRanker {
        let base = PairwiseRanker::init(F, Q, &[6], Activation::Relu, mix(seed, 100)).unwrap();
        AttentionRanker::init(base, &toy_multivariate(seed)).unwrap()
    }

    fn randomize_head(apln: &mut FeedForwardNet, seed: u64) {
        let mut flat = Vec::new();
        apln.flatten_params_into(&mut flat);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in flat.iter_mut() {
            *p = rng.gen_range(-0.5..0.5);
        }
        apln.unflatten_params_from(&flat, 0).unwrap();
    }

    #[test]
    fn attention_context_over_identical_peers_is_their_value_projection() {
        let r = attn_ranker(12);
        let one = toy_listings(1, 16).pop().unwrap();
        let mut listings = vec![one.clone(); 4];
        for (i, l) in listings.iter_mut().enumerate() {
            l.id = i as u64 + 10;
        }
        let mut distinct = toy_listings(1, 17).pop().unwrap();
        distinct.id = 0;
        listings.insert(0, distinct);
        let cache = r.context_cache(&listings).unwrap();
        let (_, _, context) = r.attend(0, &cache).unwrap();
        let v = r.proj_value.apply(&cache.embeds[1]);
        for (c, vv) in context.iter().zip(&v) {
            assert!((c - vv).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_zeroed_head_reproduces_first_stage() {
        let r = attn_ranker(13);
        let listings = toy_listings(5, 18);
        let query = toy_query(7);
        let base = r.base_logits(&listings, &query).unwrap();
        for i in 0..listings.len() {
            assert_eq!(r.attention_logit(i, &listings, &query).unwrap(), base[i]);
        }
    }

    /// Loop-based oracle for the attention logit on a small set.
    fn attn_oracle(r: &AttentionRanker, i: usize, listings: &[Listing], query: &Query) -> f64 {
        let e: Vec<Vec<f64>> = listings
            .iter()
            .map(|l| r.embed.forward(&l.features).unwrap())
            .collect();
        let q = r.proj_query.apply(&e[i]);
        let scale = 1.0 / (r.e_width as f64).sqrt();
        let mut scored = Vec::new();
        for j in 0..listings.len() {
            if j == i {
                continue;
            }
            let k = r.proj_key.apply(&e[j]);
            scored.push((j, q.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() * scale));
        }
        let max = scored.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = scored.iter().map(|(_, s)| (s - max).exp()).sum();
        let mut context = vec![0.0; r.e_width];
        for (j, s) in &scored {
            let w = (s - max).exp() / total;
            let v = r.proj_value.apply(&e[*j]);
            for (c, vv) in context.iter_mut().zip(&v) {
                *c += w * vv;
            }
        }
        let mut input = e[i].clone();
        input.extend_from_slice(&context);
        r.base.pointwise_logit(&listings[i], query).unwrap() + r.apln.forward(&input).unwrap()[0]
    }

    #[test]
    fn attention_logit_matches_loop_oracle() {
        let mut r = attn_ranker(14);
        randomize_head(&mut r.apln, 88);
        let listings = toy_listings(3, 19);
        let query = toy_query(8);
        for i in 0..3 {
            let got = r.attention_logit(i, &listings, &query).unwrap();
            let want = attn_oracle(&r, i, &listings, &query);
            assert!((got - want).abs() < 1e-12, "listing {i}: {got} vs {want}");
        }
    }

    #[test]
    fn attention_logit_is_invariant_to_peer_permutations() {
        let mut r = attn_ranker(15);
        randomize_head(&mut r.apln, 99);
        let listings = toy_listings(9, 20);
        let query = toy_query(9);
        let reference = r.attention_logit(0, &listings, &query).unwrap();
        for s in 0..50 {
            let (pos, shuffled) = shuffle_others(0, &listings, s + 1000);
            let shuffled_logit = r.attention_logit(pos, &shuffled, &query).unwrap();
            let rel = (shuffled_logit - reference).abs() / reference.abs().max(1e-12);
            assert!(rel < 1e-9, "relative deviation {rel}");
        }
    }

    #[test]
    fn variant_tags_round_trip_through_strings() {
        for kind in VariantKind::ALL {
            assert_eq!(kind.as_str().parse::<VariantKind>().unwrap(), kind);
        }
        assert!(matches!("nonsense".parse::<VariantKind>().unwrap_err(), Error::Config(_)));
    }

    #[test]
    fn pair_logit_matrix_counts_unique_evaluations() {
        let r = TruePairwiseRanker::init(F, Q, &[6], Activation::Relu, 30).unwrap();
        let listings = toy_listings(7, 21);
        let query = toy_query(10);
        let (matrix, evals) = pair_logit_matrix(&r, &query, &listings).unwrap();
        assert_eq!(evals, 7 * 6 / 2);
        for i in 0..7 {
            assert_eq!(matrix[i][i], 0.0);
            for j in 0..7 {
                if i != j {
                    assert_eq!(matrix[i][j].to_bits(), (-matrix[j][i]).to_bits());
                }
            }
        }
    }
}
