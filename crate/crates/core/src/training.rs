//! Pair extraction, loss functions, and the training loops for all five
//! ranker variants.
//!
//! Training is plain per-pair SGD/Adam: for each (booked, not-booked) pair
//! the variant computes its final logits, the binary cross-entropy loss on
//! the logit difference, and exact gradients over every trainable parameter.
//! The set-aware variants keep their first-stage ranker frozen and train only
//! the feature nets, the aggregation biases, and the logit head.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::{sigmoid_stable, softplus_stable, GradientSet};
use crate::optim::{OptAlgo, OptimizerState};
use crate::rankers::{
    AllPairwiseRanker, AttentionRanker, PairwiseRanker, RankerVariant, TruePairwiseRanker,
};
use crate::seeds::mix;
use crate::sim::{Impression, Listing, Query};

/// One training example: a booked/not-booked pair with the full candidate
/// list it came from (the set-aware models need the context).
#[derive(Debug, Clone, Copy)]
pub struct TrainingPair<'a> {
    pub query: &'a Query,
    pub context: &'a [Listing],
    /// Index of the booked listing within `context`.
    pub booked: usize,
    /// Index of the not-booked listing within `context`.
    pub not_booked: usize,
    pub trip_rating: u8,
}

/// Trip-quality loss weighting (off by default).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TripWeighting {
    Off,
    On { alpha: f64 },
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptAlgo,
    pub shuffle_seed: u64,
    /// Negatives sampled per impression; `None` pairs the booked listing with
    /// every not-booked listing.
    pub pairs_per_impression: Option<usize>,
    pub trip_weighting: TripWeighting,
    /// Global-norm gradient clip. Keeps Adam from running the residual heads
    /// into dead-unit collapse on rare steep steps.
    pub grad_clip_norm: Option<f64>,
    /// Decoupled weight decay (`p *= 1 - lr * decay` per step). Pair losses
    /// only see logit differences, so constant output components are
    /// unconstrained; the decay keeps that free mode from drifting the heads
    /// into dead or saturated regions.
    pub weight_decay: f64,
    /// Pairs averaged into one optimizer step. Batch size 1 is the plain
    /// per-pair loop; larger batches average the gradient noise away, which
    /// Adam otherwise amplifies into parameter drift.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            learning_rate: 0.001,
            optimizer: OptAlgo::Adam,
            shuffle_seed: 0,
            pairs_per_impression: None,
            trip_weighting: TripWeighting::Off,
            grad_clip_norm: Some(5.0),
            weight_decay: 0.01,
            batch_size: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".to_string()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".to_string()));
        }
        if let TripWeighting::On { alpha } = self.trip_weighting {
            if alpha < 0.0 {
                return Err(Error::Config("trip weighting alpha must be non-negative".to_string()));
            }
        }
        if let Some(clip) = self.grad_clip_norm {
            if !(clip > 0.0) {
                return Err(Error::Config("grad_clip_norm must be positive".to_string()));
            }
        }
        if !(0.0..1.0).contains(&self.weight_decay) {
            return Err(Error::Config("weight_decay must be in [0, 1)".to_string()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".to_string()));
        }
        Ok(())
    }
}

// --- losses -------------------------------------------------------------------

/// Binary cross-entropy with label 1 on the logit difference:
/// `-log(sigmoid(f_booked - f_not_booked))`, computed as a stable softplus.
pub fn pairwise_loss(f_booked_logit: f64, f_not_booked_logit: f64) -> Result<f64> {
    if !f_booked_logit.is_finite() || !f_not_booked_logit.is_finite() {
        return Err(Error::Numeric("pairwise loss logits must be finite".to_string()));
    }
    Ok(softplus_stable(-(f_booked_logit - f_not_booked_logit)))
}

/// Symmetric binary cross-entropy over both comparison directions:
/// `-log(sigmoid(g_fwd)) - log(1 - sigmoid(g_rev))`. With an anti-commutative
/// comparator (`g_rev = -g_fwd`) this is `2 * softplus(-g_fwd)`.
pub fn true_pairwise_loss(g_fwd: f64, g_rev: f64) -> Result<f64> {
    if !g_fwd.is_finite() || !g_rev.is_finite() {
        return Err(Error::Numeric("true-pairwise loss logits must be finite".to_string()));
    }
    Ok(softplus_stable(-g_fwd) + softplus_stable(g_rev))
}

/// Trip-quality contribution to the pair weight: `max(0, alpha * (rating -
/// 3) / 2)`, so a 5-star stay adds `alpha` and anything at or below neutral
/// adds nothing.
pub fn trip_quality_weight(trip_rating: u8, alpha: f64) -> Result<f64> {
    if !(1..=5).contains(&trip_rating) {
        return Err(Error::Validation(format!(
            "trip rating must be in 1..=5, got {trip_rating}"
        )));
    }
    Ok((alpha * (trip_rating as f64 - 3.0) / 2.0).max(0.0))
}

/// Total pair weight: bookings carry a base weight of 1, trip quality adds
/// to it when weighting is enabled.
pub fn total_weight(trip_rating: u8, weighting: &TripWeighting) -> Result<f64> {
    match weighting {
        TripWeighting::Off => Ok(1.0),
        TripWeighting::On { alpha } => Ok(1.0 + trip_quality_weight(trip_rating, *alpha)?),
    }
}

/// Scales a base loss by the total objective weight (which is always >= 1).
pub fn weighted_loss(base_loss: f64, total_weight: f64) -> Result<f64> {
    if total_weight < 1.0 {
        return Err(Error::Validation(format!(
            "total weight must be >= 1, got {total_weight}"
        )));
    }
    Ok(base_loss * total_weight)
}

// --- pair extraction ----------------------------------------------------------

/// Extracts (booked, not-booked) pairs from a log. Per impression, either all
/// negatives or a seeded sample of `pairs_per_impression` of them. Returns
/// the pairs and the count of impressions skipped for having no negatives.
pub fn extract_pairs<'a>(
    log: &'a [Impression],
    cfg: &TrainConfig,
) -> (Vec<TrainingPair<'a>>, usize) {
    let mut pairs = Vec::new();
    let mut skipped = 0usize;
    for (idx, imp) in log.iter().enumerate() {
        let n = imp.candidates.len();
        if n < 2 {
            skipped += 1;
            continue;
        }
        let mut negatives: Vec<usize> = (0..n).filter(|&j| j != imp.booked_index).collect();
        if let Some(limit) = cfg.pairs_per_impression {
            if limit < negatives.len() {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.shuffle_seed, idx as u64));
                // Partial Fisher-Yates: the first `limit` slots become a
                // uniform sample without replacement.
                for k in 0..limit {
                    let m = rng.gen_range(k..negatives.len());
                    negatives.swap(k, m);
                }
                negatives.truncate(limit);
                negatives.sort_unstable();
            }
        }
        for j in negatives {
            pairs.push(TrainingPair {
                query: &imp.query,
                context: &imp.candidates,
                booked: imp.booked_index,
                not_booked: j,
                trip_rating: imp.trip_rating,
            });
        }
    }
    (pairs, skipped)
}

// --- trainable surface ----------------------------------------------------------

/// A model with a flat view of its trainable parameters and a per-pair loss
/// with exact gradients. The flat layout is fixed per implementation and is
/// what the optimizer steps over.
pub trait TrainableModel {
    fn trainable_count(&self) -> usize;
    fn read_params(&self, out: &mut Vec<f64>);
    fn write_params(&mut self, flat: &[f64]) -> Result<()>;
    /// Weighted loss for one pair.
    fn pair_loss(&self, pair: &TrainingPair<'_>, weight: f64) -> Result<f64>;
    /// Weighted loss and its gradient over the flat trainable parameters.
    fn pair_loss_grads(&self, pair: &TrainingPair<'_>, weight: f64) -> Result<(f64, Vec<f64>)>;
}

fn check_flat_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape(format!(
            "flat parameter vector has length {got}, model expects {expected}"
        )));
    }
    Ok(())
}

impl TrainableModel for PairwiseRanker {
    fn trainable_count(&self) -> usize {
        self.f.parameter_count()
    }

    fn read_params(&self, out: &mut Vec<f64>) {
        self.f.flatten_params_into(out);
    }

    fn write_params(&mut self, flat: &[f64]) -> Result<()> {
        check_flat_len(self.trainable_count(), flat.len())?;
        self.f.unflatten_params_from(flat, 0)?;
        Ok(())
    }

    fn pair_loss(&self, pair: &TrainingPair<'_>, weight: f64) -> Result<f64> {
        let fb = self.pointwise_logit(&pair.context[pair.booked], pair.query)?;
        let fnb = self.pointwise_logit(&pair.context[pair.not_booked], pair.query)?;
        weighted_loss(pairwise_loss(fb, fnb)?, weight)
    }

    fn pair_loss_grads(&self, pair: &TrainingPair<'_>, weight: f64) -> Result<(f64, Vec<f64>)> {
        let booked_input = self.scorer_input(&pair.context[pair.booked], pair.query);
        let not_booked_input = self.scorer_input(&pair.context[pair.not_booked], pair.query);
        let fb = self.f.forward(&booked_input)?[0];
        let fnb = self.f.forward(&not_booked_input)?[0];
        let diff = fb - fnb;
        let loss = weighted_loss(pairwise_loss(fb, fnb)?, weight)?;
        // d loss / d diff = -sigmoid(-diff), scaled by the pair weight.
        let coef = -weight * sigmoid_stable(-diff);
        let mut grads = self.f.backward(&booked_input, &[coef])?;
        grads.add_assign(&self.f.backward(&not_booked_input, &[-coef])?);
        let mut flat = Vec::with_capacity(self.trainable_count());
        grads.flatten_into(&mut flat);
        Ok((loss, flat))
    }
}

impl TrainableModel for TruePairwiseRanker {
    fn trainable_count(&self) -> usize {
        self.h.parameter_count()
    }

    fn read_params(&self, out: &mut Vec<f64>) {
        self.h.flatten_params_into(out);
    }

    fn write_params(&mut self, flat: &[f64]) -> Result<()> {
        check_flat_len(self.trainable_count(), flat.len())?;
        self.h.unflatten_params_from(flat, 0)?;
        Ok(())
    }

    fn pair_loss(&self, pair: &TrainingPair<'_>, weight: f64) -> Result<f64> {
        let g = self.true_pairwise_logit(
            &pair.context[pair.booked],
            &pair.context[pair.not_booked],
            pair.query,
        )?;
        weighted_loss(true_pairwise_loss(g, -g)?, weight)
    }

    fn pair_loss_grads(&self, pair: &TrainingPair<'_>, weight: f64) -> Result<(f64, Vec<f64>)> {
        let booked = &pair.context[pair.booked];
        let not_booked = &pair.context[pair.not_booked];
        let fwd_input = self.pair_input(booked, not_booked, pair.query);
        let rev_input = self.pair_input(not_booked, booked, pair.query);
        let g = self.h.forward(&fwd_input)?[0] - self.h.forward(&rev_input)?[0];
        let loss = weighted_loss(true_pairwise_loss(g, -g)?, weight)?;
        // Both cross-entropy terms push on g: d loss / d g = -2 sigmoid(-g).
        let coef = -2.0 * weight * sigmoid_stable(-g);
        let mut grads = self.h.backward(&fwd_input, &[coef])?;
        grads.add_assign(&self.h.backward(&rev_input, &[-coef])?);
        let mut flat = Vec::with_capacity(self.trainable_count());
        grads.flatten_into(&mut flat);
        Ok((loss, flat))
    }
}

/// Flat layout for the APFN trainables:
/// `[phi_sup, psi_embed, phi_sim, beta_sup, beta_sim, apln]`.
impl TrainableModel for AllPairwiseRanker {
    fn trainable_count(&self) -> usize {
        self.trainable_parameter_count()
    }

    fn read_params(&self, out: &mut Vec<f64>) {
        self.phi_sup.flatten_params_into(out);
        self.psi_embed.flatten_params_into(out);
        self.phi_sim.flatten_params_into(out);
        out.extend_from_slice(&self.beta_sup);
        out.extend_from_slice(&self.beta_sim);
        self.apln.flatten_params_into(out);
    }

    fn write_params(&mut self, flat: &[f64]) -> Result<()> {
        check_flat_len(self.trainable_count(), flat.len())?;
        let mut offset = self.phi_sup.unflatten_params_from(flat, 0)?;
        offset = self.psi_embed.unflatten_params_from(flat, offset)?;
        offset = self.phi_sim.unflatten_params_from(flat, offset)?;
        self.beta_sup.copy_from_slice(&flat[offset..offset + self.k_width]);
        offset += self.k_width;
        self.beta_sim.copy_from_slice(&flat[offset..offset + self.k_width]);
        offset += self.k_width;
        self.apln.unflatten_params_from(flat, offset)?;
        Ok(())
    }

    fn pair_loss(&self, pair: &TrainingPair<'_>, weight: f64) -> Result<f64> {
        let base = self.base_logits(pair.context, pair.query)?;
        let cache = self.context_cache(pair.context)?;
        let lb = self.logit_from_cache(pair.booked, &cache, &base)?;
        let lnb = self.logit_from_cache(pair.not_booked, &cache, &base)?;
        weighted_loss(pairwise_loss(lb, lnb)?, weight)
    }

    fn pair_loss_grads(&self, pair: &TrainingPair<'_>, weight: f64) -> Result<(f64, Vec<f64>)> {
        let context = pair.context;
        let n = context.len();
        if n < 2 {
            return Err(Error::Shape("training context needs at least 2 listings".to_string()));
        }
        let base = self.base_logits(context, pair.query)?;
        let cache = self.context_cache(context)?;
        let lb = self.logit_from_cache(pair.booked, &cache, &base)?;
        let lnb = self.logit_from_cache(pair.not_booked, &cache, &base)?;
        let diff = lb - lnb;
        let loss = weighted_loss(pairwise_loss(lb, lnb)?, weight)?;
        let sig = sigmoid_stable(-diff);

        let k = self.k_width;
        let mut g_apln = GradientSet::zeros_like(&self.apln);
        let mut g_beta_sup = vec![0.0; k];
        let mut g_beta_sim = vec![0.0; k];
        // Per-listing upstreams, accumulated across the two scored listings
        // and pushed through the feature nets once each.
        let mut up_phi_sup = vec![vec![0.0; k]; n];
        let mut up_phi_sim = vec![vec![0.0; k]; n];
        let mut d_embed = vec![vec![0.0; self.e_width]; n];

        for (i, coef) in [(pair.booked, -weight * sig), (pair.not_booked, weight * sig)] {
            let sup = self.superiority_from_cache(i, &cache, &base);
            let sim = self.similarity_from_cache(i, &cache)?;
            let mut head_input = sup;
            head_input.extend_from_slice(&sim);
            let (head_grads, head_dx) = self.apln.backward_io(&head_input, &[coef])?;
            g_apln.add_assign(&head_grads);
            let (u_sup, u_sim) = head_dx.split_at(k);

            for (gb, u) in g_beta_sup.iter_mut().zip(u_sup) {
                *gb += u;
            }
            for (gb, u) in g_beta_sim.iter_mut().zip(u_sim) {
                *gb += u;
            }

            // Superiority path: the sigmoid factors are constants of the
            // frozen first stage.
            for j in 0..n {
                if j == i {
                    continue;
                }
                let s = sigmoid_stable(base[i] - base[j]);
                for (acc, u) in up_phi_sup[j].iter_mut().zip(u_sup) {
                    *acc += s * u;
                }
            }

            // Similarity path: softmax weights over embedding dot products.
            let peers: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let own = &cache.embeds[i];
            let dots: Vec<f64> = peers
                .iter()
                .map(|&j| own.iter().zip(&cache.embeds[j]).map(|(a, b)| a * b).sum())
                .collect();
            let weights = crate::net::softmax(&dots)?;
            let r: Vec<f64> = peers
                .iter()
                .map(|&j| u_sim.iter().zip(&cache.phi_sim[j]).map(|(u, p)| u * p).sum())
                .collect();
            let r_bar: f64 = weights.iter().zip(&r).map(|(w, rv)| w * rv).sum();
            for ((&j, &w), &rv) in peers.iter().zip(&weights).zip(&r) {
                for (acc, u) in up_phi_sim[j].iter_mut().zip(u_sim) {
                    *acc += w * u;
                }
                let da = w * (rv - r_bar);
                for (de, e) in d_embed[i].iter_mut().zip(&cache.embeds[j]) {
                    *de += da * e;
                }
                for (de, e) in d_embed[j].iter_mut().zip(&cache.embeds[i]) {
                    *de += da * e;
                }
            }
        }

        let mut g_phi_sup = GradientSet::zeros_like(&self.phi_sup);
        let mut g_phi_sim = GradientSet::zeros_like(&self.phi_sim);
        let mut g_psi = GradientSet::zeros_like(&self.psi_embed);
        for j in 0..n {
            g_phi_sup.add_assign(&self.phi_sup.backward(&context[j].features, &up_phi_sup[j])?);
            g_phi_sim.add_assign(&self.phi_sim.backward(&context[j].features, &up_phi_sim[j])?);
            g_psi.add_assign(&self.psi_embed.backward(&context[j].features, &d_embed[j])?);
        }

        let mut flat = Vec::with_capacity(self.trainable_count());
        g_phi_sup.flatten_into(&mut flat);
        g_psi.flatten_into(&mut flat);
        g_phi_sim.flatten_into(&mut flat);
        flat.extend_from_slice(&g_beta_sup);
        flat.extend_from_slice(&g_beta_sim);
        g_apln.flatten_into(&mut flat);
        Ok((loss, flat))
    }
}

/// Flat layout for the attention trainables:
/// `[embed, proj_query, proj_key, proj_value, apln]`.
impl TrainableModel for AttentionRanker {
    fn trainable_count(&self) -> usize {
        self.trainable_parameter_count()
    }

    fn read_params(&self, out: &mut Vec<f64>) {
        self.embed.flatten_params_into(out);
        out.extend_from_slice(&self.proj_query.weights);
        out.extend_from_slice(&self.proj_key.weights);
        out.extend_from_slice(&self.proj_value.weights);
        self.apln.flatten_params_into(out);
    }

    fn write_params(&mut self, flat: &[f64]) -> Result<()> {
        check_flat_len(self.trainable_count(), flat.len())?;
        let mut offset = self.embed.unflatten_params_from(flat, 0)?;
        for proj in [&mut self.proj_query, &mut self.proj_key, &mut self.proj_value] {
            let len = proj.weights.len();
            proj.weights.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        self.apln.unflatten_params_from(flat, offset)?;
        Ok(())
    }

    fn pair_loss(&self, pair: &TrainingPair<'_>, weight: f64) -> Result<f64> {
        let base = self.base_logits(pair.context, pair.query)?;
        let cache = self.context_cache(pair.context)?;
        let lb = self.logit_from_cache(pair.booked, &cache, &base)?;
        let lnb = self.logit_from_cache(pair.not_booked, &cache, &base)?;
        weighted_loss(pairwise_loss(lb, lnb)?, weight)
    }

    fn pair_loss_grads(&self, pair: &TrainingPair<'_>, weight: f64) -> Result<(f64, Vec<f64>)> {
        let context = pair.context;
        let n = context.len();
        if n < 2 {
            return Err(Error::Shape("training context needs at least 2 listings".to_string()));
        }
        let base = self.base_logits(context, pair.query)?;
        let cache = self.context_cache(context)?;
        let lb = self.logit_from_cache(pair.booked, &cache, &base)?;
        let lnb = self.logit_from_cache(pair.not_booked, &cache, &base)?;
        let diff = lb - lnb;
        let loss = weighted_loss(pairwise_loss(lb, lnb)?, weight)?;
        let sig = sigmoid_stable(-diff);

        let e_width = self.e_width;
        let scale = 1.0 / (e_width as f64).sqrt();
        let mut g_apln = GradientSet::zeros_like(&self.apln);
        let mut g_wq = vec![0.0; self.proj_query.parameter_count()];
        let mut g_wk = vec![0.0; self.proj_key.parameter_count()];
        let mut g_wv = vec![0.0; self.proj_value.parameter_count()];
        let mut d_embed = vec![vec![0.0; e_width]; n];

        for (i, coef) in [(pair.booked, -weight * sig), (pair.not_booked, weight * sig)] {
            let (peers, weights, context_vec) = self.attend(i, &cache)?;
            let mut head_input = cache.embeds[i].clone();
            head_input.extend_from_slice(&context_vec);
            let (head_grads, head_dx) = self.apln.backward_io(&head_input, &[coef])?;
            g_apln.add_assign(&head_grads);
            let (u_own, u_ctx) = head_dx.split_at(e_width);

            for (de, u) in d_embed[i].iter_mut().zip(u_own) {
                *de += u;
            }

            let q = self.proj_query.apply(&cache.embeds[i]);
            let values: Vec<Vec<f64>> =
                peers.iter().map(|&j| self.proj_value.apply(&cache.embeds[j])).collect();
            let keys: Vec<Vec<f64>> =
                peers.iter().map(|&j| self.proj_key.apply(&cache.embeds[j])).collect();

            // Value path: d context / d v_j = w_j.
            for (&j, &w) in peers.iter().zip(&weights) {
                let up_v: Vec<f64> = u_ctx.iter().map(|u| w * u).collect();
                let dxj = self.proj_value.backward_accum(&cache.embeds[j], &up_v, &mut g_wv);
                for (de, dx) in d_embed[j].iter_mut().zip(&dxj) {
                    *de += dx;
                }
            }

            // Score path through the softmax.
            let r: Vec<f64> = values
                .iter()
                .map(|v| u_ctx.iter().zip(v).map(|(u, vv)| u * vv).sum())
                .collect();
            let r_bar: f64 = weights.iter().zip(&r).map(|(w, rv)| w * rv).sum();
            let mut d_q = vec![0.0; e_width];
            for (((&j, &w), &rv), key) in peers.iter().zip(&weights).zip(&r).zip(&keys) {
                let da = w * (rv - r_bar);
                for (dq, kk) in d_q.iter_mut().zip(key) {
                    *dq += scale * da * kk;
                }
                let up_k: Vec<f64> = q.iter().map(|qq| scale * da * qq).collect();
                let dxj = self.proj_key.backward_accum(&cache.embeds[j], &up_k, &mut g_wk);
                for (de, dx) in d_embed[j].iter_mut().zip(&dxj) {
                    *de += dx;
                }
            }
            let dxi = self.proj_query.backward_accum(&cache.embeds[i], &d_q, &mut g_wq);
            for (de, dx) in d_embed[i].iter_mut().zip(&dxi) {
                *de += dx;
            }
        }

        let mut g_embed = GradientSet::zeros_like(&self.embed);
        for j in 0..n {
            g_embed.add_assign(&self.embed.backward(&context[j].features, &d_embed[j])?);
        }

        let mut flat = Vec::with_capacity(self.trainable_count());
        g_embed.flatten_into(&mut flat);
        flat.extend_from_slice(&g_wq);
        flat.extend_from_slice(&g_wk);
        flat.extend_from_slice(&g_wv);
        g_apln.flatten_into(&mut flat);
        Ok((loss, flat))
    }
}

// --- training loop --------------------------------------------------------------

/// Mean loss per epoch, as written to the loss-trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub pair_count: usize,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub ranker: RankerVariant,
    pub trace: Vec<EpochStats>,
    pub skipped_impressions: usize,
}

fn train_model<M: TrainableModel>(
    model: &mut M,
    pairs: &[TrainingPair<'_>],
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    let mut state = OptimizerState::new(cfg.optimizer, cfg.learning_rate, model.trainable_count())?;
    let mut params = Vec::with_capacity(model.trainable_count());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.shuffle_seed, epoch as u64));
        for k in (1..order.len()).rev() {
            let m = rng.gen_range(0..=k);
            order.swap(k, m);
        }
        let mut loss_sum = 0.0;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut batch_grads: Vec<f64> = Vec::new();
            for &pair_idx in batch {
                let pair = &pairs[pair_idx];
                let weight = total_weight(pair.trip_rating, &cfg.trip_weighting)?;
                let (loss, grads) = model.pair_loss_grads(pair, weight)?;
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!("epoch {epoch}, batch {batch_no}")));
                }
                if batch_grads.is_empty() {
                    batch_grads = grads;
                } else {
                    for (acc, g) in batch_grads.iter_mut().zip(&grads) {
                        *acc += g;
                    }
                }
                loss_sum += loss;
            }
            let inv = 1.0 / batch.len() as f64;
            batch_grads.iter_mut().for_each(|g| *g *= inv);
            if let Some(clip) = cfg.grad_clip_norm {
                let norm = batch_grads.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > clip {
                    let scale = clip / norm;
                    batch_grads.iter_mut().for_each(|g| *g *= scale);
                }
            }
            params.clear();
            model.read_params(&mut params);
            if cfg.weight_decay > 0.0 {
                let keep = 1.0 - cfg.learning_rate * cfg.weight_decay;
                params.iter_mut().for_each(|p| *p *= keep);
            }
            state.step_params(&mut params, &batch_grads)?;
            model.write_params(&params)?;
        }
        trace.push(EpochStats {
            epoch,
            mean_loss: loss_sum / pairs.len() as f64,
            pair_count: pairs.len(),
        });
    }
    Ok(trace)
}

/// Trains one ranker variant on a log. The pairwise variant trains `f`; the
/// true-pairwise variants train `h`; the set-aware variants train the feature
/// nets, biases, and logit head with the first stage frozen. Deterministic in
/// the variant's init seeds and `shuffle_seed`.
pub fn train_variant(
    variant: RankerVariant,
    log: &[Impression],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (pairs, skipped) = extract_pairs(log, cfg);
    if pairs.is_empty() {
        return Err(Error::Training(
            "no training pairs could be extracted from the log".to_string(),
        ));
    }
    let mut variant = variant;
    let trace = match &mut variant {
        RankerVariant::Pairwise(r) => train_model(r, &pairs, cfg)?,
        RankerVariant::TruePairwiseAvg(r) | RankerVariant::TruePairwiseGbt(r) => {
            train_model(r, &pairs, cfg)?
        }
        RankerVariant::AllPairwiseApfn(r) => train_model(r, &pairs, cfg)?,
        RankerVariant::AllPairwiseAttn(r) => train_model(r, &pairs, cfg)?,
    };
    Ok(TrainOutcome {
        ranker: variant,
        trace,
        skipped_impressions: skipped,
    })
}

/// Writes the per-epoch loss trace as CSV: `epoch,mean_loss,pair_count`.
pub fn write_loss_trace(path: &Path, trace: &[EpochStats]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Serialize(e.to_string()))?;
    writer
        .write_record(["epoch", "mean_loss", "pair_count"])
        .map_err(|e| Error::Serialize(e.to_string()))?;
    for row in trace {
        writer
            .write_record([
                row.epoch.to_string(),
                format!("{:.17e}", row.mean_loss),
                row.pair_count.to_string(),
            ])
            .map_err(|e| Error::Serialize(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
