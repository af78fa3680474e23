//! Desk-scale offline experiments over the synthetic marketplace: parameter
//! scaling, rerank cost/benefit, diversity, seed uncertainty, offline A/B
//! comparison, jitter stability, and multi-objective training.
//!
//! Every experiment is a pure function of its spec: data and models are
//! seeded, so rerunning a spec reproduces every non-timing value exactly.
//! Independent cells (variant x seed x sweep value) may run on a small
//! thread pool sized by the `LTRLAB_THREADS` environment variable.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::aggregation::scores_to_ranking;
use crate::error::{Error, Result};
use crate::metrics::{count_flips, mean_ndcg, price_variance_diversity, RankedImpression};
use crate::net::Activation;
use crate::optim::OptAlgo;
use crate::pipeline::{rank, PipelineConfig};
use crate::rankers::{
    AllPairwiseRanker, AttentionRanker, MultivariateConfig, PairwiseRanker, RankerVariant,
    TruePairwiseRanker, VariantKind,
};
use crate::report::{mean_and_stddev, ExperimentReport, Record};
use crate::seeds::mix;
use crate::sim::{
    generate_listings, generate_search_log, jitter_query, noiseless_trip_rating, sample_query,
    select_candidates, ChoiceModelConfig, Impression, Listing,
};
use crate::training::{train_variant, TrainConfig, TripWeighting};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ParamScaling,
    RerankTradeoff,
    Diversity,
    Uncertainty,
    AbOffline,
    Stability,
    MultiObjective,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::ParamScaling => "param_scaling",
            ExperimentKind::RerankTradeoff => "rerank_tradeoff",
            ExperimentKind::Diversity => "diversity",
            ExperimentKind::Uncertainty => "uncertainty",
            ExperimentKind::AbOffline => "ab_offline",
            ExperimentKind::Stability => "stability",
            ExperimentKind::MultiObjective => "multi_objective",
        }
    }
}

/// Hidden-layer widths for every net in the roster; one of these per sweep
/// point in the parameter-scaling experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSizes {
    pub f_hidden: Vec<usize>,
    pub h_hidden: Vec<usize>,
    pub k_width: usize,
    pub e_width: usize,
    pub feature_net_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
}

impl Default for ModelSizes {
    fn default() -> Self {
        Self {
            f_hidden: vec![24, 12],
            h_hidden: vec![32, 16],
            k_width: 8,
            e_width: 8,
            feature_net_hidden: vec![16],
            head_hidden: vec![16, 8],
        }
    }
}

impl ModelSizes {
    pub fn small() -> Self {
        Self {
            f_hidden: vec![8],
            h_hidden: vec![12],
            k_width: 4,
            e_width: 4,
            feature_net_hidden: vec![8],
            head_hidden: vec![8],
        }
    }

    pub fn large() -> Self {
        Self {
            f_hidden: vec![96, 48],
            h_hidden: vec![128, 64],
            k_width: 32,
            e_width: 32,
            feature_net_hidden: vec![64],
            head_hidden: vec![64, 32],
        }
    }
}

fn d_model_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}
fn d_pool() -> usize {
    1500
}
fn d_feature_width() -> usize {
    crate::sim::DEFAULT_FEATURE_WIDTH
}
fn d_train_impressions() -> usize {
    800
}
fn d_eval_impressions() -> usize {
    300
}
fn d_candidates() -> usize {
    20
}
fn d_rerank_ks() -> Vec<usize> {
    vec![1, 5, 10, 20, 40, 60]
}
fn d_page_size() -> usize {
    10
}
fn d_epochs() -> usize {
    5
}
fn d_learning_rate() -> f64 {
    0.02
}
fn d_sizes() -> ModelSizes {
    ModelSizes::default()
}
fn d_param_sweep() -> Vec<ModelSizes> {
    vec![ModelSizes::small(), ModelSizes::default(), ModelSizes::large()]
}
fn d_choice() -> ChoiceModelConfig {
    ChoiceModelConfig::default_synthetic()
}
fn d_jitter_magnitude() -> f64 {
    0.01
}
fn d_jitter_queries() -> usize {
    150
}
fn d_jitters_per_query() -> usize {
    4
}
fn d_flip_k() -> usize {
    10
}
fn d_alpha() -> f64 {
    0.5
}
fn d_data_seed() -> u64 {
    1
}

/// Everything an experiment run depends on. Seeds are explicit; there are no
/// wall-clock defaults anywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    #[serde(default = "d_data_seed")]
    pub data_seed: u64,
    #[serde(default = "d_model_seeds")]
    pub model_seeds: Vec<u64>,
    #[serde(default = "d_pool")]
    pub listing_pool: usize,
    #[serde(default = "d_feature_width")]
    pub feature_width: usize,
    #[serde(default = "d_train_impressions")]
    pub train_impressions: usize,
    #[serde(default = "d_eval_impressions")]
    pub eval_impressions: usize,
    #[serde(default = "d_candidates")]
    pub candidates_per_impression: usize,
    #[serde(default = "d_rerank_ks")]
    pub rerank_ks: Vec<usize>,
    #[serde(default = "d_page_size")]
    pub page_size: usize,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub pairs_per_impression: Option<usize>,
    #[serde(default = "d_sizes")]
    pub sizes: ModelSizes,
    #[serde(default = "d_param_sweep")]
    pub param_sweep: Vec<ModelSizes>,
    #[serde(default = "d_choice")]
    pub choice: ChoiceModelConfig,
    #[serde(default = "d_jitter_magnitude")]
    pub jitter_magnitude: f64,
    #[serde(default = "d_jitter_queries")]
    pub jitter_queries: usize,
    #[serde(default = "d_jitters_per_query")]
    pub jitters_per_query: usize,
    #[serde(default = "d_flip_k")]
    pub flip_k: usize,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Tuned desk-scale defaults per experiment.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let mut spec = Self {
            experiment: kind,
            data_seed: d_data_seed(),
            model_seeds: d_model_seeds(),
            listing_pool: d_pool(),
            feature_width: d_feature_width(),
            train_impressions: d_train_impressions(),
            eval_impressions: d_eval_impressions(),
            candidates_per_impression: d_candidates(),
            rerank_ks: d_rerank_ks(),
            page_size: d_page_size(),
            epochs: d_epochs(),
            learning_rate: d_learning_rate(),
            pairs_per_impression: None,
            sizes: d_sizes(),
            param_sweep: d_param_sweep(),
            choice: d_choice(),
            jitter_magnitude: d_jitter_magnitude(),
            jitter_queries: d_jitter_queries(),
            jitters_per_query: d_jitters_per_query(),
            flip_k: d_flip_k(),
            alpha: d_alpha(),
            output_path: None,
        };
        match kind {
            ExperimentKind::ParamScaling => {
                spec.model_seeds = vec![1, 2];
            }
            ExperimentKind::RerankTradeoff | ExperimentKind::Diversity => {
                // The sweep reranks up to 60, so impressions carry 60
                // candidates and training samples a slice of the negatives.
                spec.candidates_per_impression = 60;
                spec.train_impressions = 300;
                spec.eval_impressions = 120;
                spec.pairs_per_impression = Some(10);
                spec.listing_pool = 2500;
            }
            ExperimentKind::Uncertainty => {
                spec.model_seeds = (1..=8).collect();
            }
            ExperimentKind::Stability => {
                spec.train_impressions = 500;
            }
            _ => {}
        }
        spec
    }

    fn validate(&self) -> Result<()> {
        if self.model_seeds.is_empty() {
            return Err(Error::Config("model_seeds must not be empty".to_string()));
        }
        if self.listing_pool < self.candidates_per_impression {
            return Err(Error::Config(
                "listing_pool must be at least candidates_per_impression".to_string(),
            ));
        }
        Ok(())
    }
}

// --- shared plumbing -----------------------------------------------------------

struct World {
    pool: Vec<Listing>,
    train: Vec<Impression>,
    eval: Vec<Impression>,
    query_width: usize,
}

fn build_world(spec: &ExperimentSpec) -> Result<World> {
    let pool = generate_listings(spec.listing_pool, spec.feature_width, spec.data_seed)?;
    let train = generate_search_log(
        spec.train_impressions,
        spec.candidates_per_impression,
        &pool,
        &spec.choice,
        mix(spec.data_seed, 1),
    )?
    .impressions;
    let eval = generate_search_log(
        spec.eval_impressions,
        spec.candidates_per_impression,
        &pool,
        &spec.choice,
        mix(spec.data_seed, 2),
    )?
    .impressions;
    let query_width = train
        .first()
        .map(|imp| imp.query.features.len())
        .ok_or_else(|| Error::Generation("empty training log".to_string()))?;
    Ok(World { pool, train, eval, query_width })
}

fn train_cfg(spec: &ExperimentSpec, seed: u64, weighting: TripWeighting) -> TrainConfig {
    TrainConfig {
        epochs: spec.epochs,
        learning_rate: spec.learning_rate,
        optimizer: OptAlgo::Adam,
        shuffle_seed: mix(seed, 0x5471),
        pairs_per_impression: spec.pairs_per_impression,
        trip_weighting: weighting,
        grad_clip_norm: Some(5.0),
        weight_decay: 0.01,
        batch_size: 32,
    }
}

fn multivariate_config(sizes: &ModelSizes, seed: u64, residual: bool) -> MultivariateConfig {
    MultivariateConfig {
        k_width: sizes.k_width,
        e_width: sizes.e_width,
        feature_net_hidden: sizes.feature_net_hidden.clone(),
        head_hidden: sizes.head_hidden.clone(),
        activation: Activation::Relu,
        seed: mix(seed, 0xA11),
        residual,
    }
}

/// Trains the univariate first stage used both as the pairwise variant and
/// as the frozen base of the set-aware variants.
fn train_first_stage(
    world: &World,
    spec: &ExperimentSpec,
    sizes: &ModelSizes,
    seed: u64,
) -> Result<PairwiseRanker> {
    let fresh = PairwiseRanker::init(
        spec.feature_width,
        world.query_width,
        &sizes.f_hidden,
        Activation::Relu,
        mix(seed, 0xF0),
    )?;
    let outcome = train_variant(
        RankerVariant::Pairwise(fresh),
        &world.train,
        &train_cfg(spec, seed, TripWeighting::Off),
    )?;
    match outcome.ranker {
        RankerVariant::Pairwise(r) => Ok(r),
        _ => unreachable!("variant kind is preserved by training"),
    }
}

/// Trains one variant end to end. Set-aware variants get `base` (training it
/// first when absent) and train only their second stage.
fn train_kind(
    kind: VariantKind,
    world: &World,
    spec: &ExperimentSpec,
    sizes: &ModelSizes,
    seed: u64,
    base: Option<&PairwiseRanker>,
    weighting: TripWeighting,
    residual: bool,
) -> Result<RankerVariant> {
    let cfg = train_cfg(spec, seed, weighting);
    let variant = match kind {
        VariantKind::Pairwise => RankerVariant::Pairwise(PairwiseRanker::init(
            spec.feature_width,
            world.query_width,
            &sizes.f_hidden,
            Activation::Relu,
            mix(seed, 0xF0),
        )?),
        VariantKind::TruePairwiseAvg | VariantKind::TruePairwiseGbt => {
            let ranker = TruePairwiseRanker::init(
                spec.feature_width,
                world.query_width,
                &sizes.h_hidden,
                Activation::Relu,
                mix(seed, 0xB1),
            )?;
            match kind {
                VariantKind::TruePairwiseAvg => RankerVariant::TruePairwiseAvg(ranker),
                _ => RankerVariant::TruePairwiseGbt(ranker),
            }
        }
        VariantKind::AllPairwiseApfn => {
            let base = match base {
                Some(b) => b.clone(),
                None => train_first_stage(world, spec, sizes, seed)?,
            };
            RankerVariant::AllPairwiseApfn(AllPairwiseRanker::init(
                base,
                &multivariate_config(sizes, seed, residual),
            )?)
        }
        VariantKind::AllPairwiseAttn => {
            let base = match base {
                Some(b) => b.clone(),
                None => train_first_stage(world, spec, sizes, seed)?,
            };
            RankerVariant::AllPairwiseAttn(AttentionRanker::init(
                base,
                &multivariate_config(sizes, seed, residual),
            )?)
        }
    };
    Ok(train_variant(variant, &world.train, &cfg)?.ranker)
}

/// Mean NDCG of a variant ranking every impression's full candidate set.
pub fn evaluate_ndcg(variant: &RankerVariant, eval: &[Impression]) -> Result<f64> {
    let mut ranked = Vec::with_capacity(eval.len());
    for imp in eval {
        let (scores, _) = variant.score_candidates(&imp.query, &imp.candidates)?;
        ranked.push(RankedImpression {
            ordering: scores_to_ranking(&scores)?,
            booked_index: imp.booked_index,
            prices: imp.candidates.iter().map(|l| l.price).collect(),
        });
    }
    mean_ndcg(&ranked)
}

/// Mean noise-free trip rating of the top 3 ranked listings.
fn evaluate_top3_rating(variant: &RankerVariant, eval: &[Impression]) -> Result<f64> {
    let mut total = 0.0;
    for imp in eval {
        let (scores, _) = variant.score_candidates(&imp.query, &imp.candidates)?;
        let order = scores_to_ranking(&scores)?;
        let top = order.iter().take(3);
        let mut sum = 0.0;
        let mut count = 0;
        for &pos in top {
            sum += noiseless_trip_rating(&imp.candidates[pos]);
            count += 1;
        }
        total += sum / count as f64;
    }
    Ok(total / eval.len() as f64)
}

fn thread_count() -> usize {
    std::env::var("LTRLAB_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
}

/// Runs `count` independent cells, possibly on a small thread pool. Results
/// come back in cell order, so parallelism never changes a report.
fn run_cells<T, F>(count: usize, threads: usize, cell: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if threads <= 1 || count <= 1 {
        return (0..count).map(&cell).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<T>>> = (0..count).map(|_| None).collect();
    let slot_refs: Vec<std::sync::Mutex<&mut Option<Result<T>>>> =
        slots.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads.min(count) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if idx >= count {
                    break;
                }
                let result = cell(idx);
                **slot_refs[idx].lock().expect("slot lock") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.expect("every cell ran"))
        .collect()
}

type Report = ExperimentReport<ExperimentSpec>;

fn record(
    variant: impl Into<String>,
    seed: u64,
    parameter: &str,
    value: f64,
    metric: &str,
    metric_value: f64,
    runtime_ms: f64,
) -> Record {
    Record {
        variant: variant.into(),
        seed,
        parameter: parameter.to_string(),
        value,
        metric: metric.to_string(),
        metric_value,
        runtime_ms,
    }
}

// --- the experiments -------------------------------------------------------------

/// Accuracy as a function of trainable parameter count, per variant
/// (the model-scaling study). Training divergence is recorded per cell, not
/// fatal.
pub fn run_param_scaling(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let world = build_world(spec)?;
    struct Cell {
        kind: VariantKind,
        size_idx: usize,
        seed: u64,
    }
    let mut cells = Vec::new();
    for size_idx in 0..spec.param_sweep.len() {
        for &seed in &spec.model_seeds {
            for kind in VariantKind::ALL {
                cells.push(Cell { kind, size_idx, seed });
            }
        }
    }
    let results = run_cells(cells.len(), thread_count(), |i| {
        let cell = &cells[i];
        let sizes = &spec.param_sweep[cell.size_idx];
        let start = Instant::now();
        let trained = match train_kind(
            cell.kind,
            &world,
            spec,
            sizes,
            cell.seed,
            None,
            TripWeighting::Off,
            true,
        ) {
            Ok(v) => v,
            Err(Error::Divergence(_)) => {
                return Ok(record(
                    cell.kind.as_str(),
                    cell.seed,
                    "parameters",
                    0.0,
                    "diverged",
                    1.0,
                    start.elapsed().as_secs_f64() * 1e3,
                ))
            }
            Err(e) => return Err(e),
        };
        let ndcg_value = evaluate_ndcg(&trained, &world.eval)?;
        Ok(record(
            cell.kind.as_str(),
            cell.seed,
            "parameters",
            trained.parameter_count() as f64,
            "ndcg",
            ndcg_value,
            start.elapsed().as_secs_f64() * 1e3,
        ))
    })?;
    Ok(Report::new(spec.clone(), results, Vec::new()))
}

fn pipeline_ranked_ids(
    config: &PipelineConfig,
    query: &crate::sim::Query,
    candidates: &[Listing],
) -> Result<Vec<u64>> {
    let outcome = rank(config, query, candidates)?;
    Ok(outcome.ordering.iter().map(|&pos| candidates[pos].id).collect())
}

/// NDCG benefit vs latency cost of reranking deeper (the rerank sweep).
/// Baseline for the percentage changes is reranking a single listing.
pub fn run_rerank_tradeoff(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let world = build_world(spec)?;
    let mut ks = spec.rerank_ks.clone();
    if !ks.contains(&1) {
        ks.push(1);
    }
    ks.sort_unstable();
    ks.dedup();

    let mut records = Vec::new();
    for &seed in &spec.model_seeds {
        let base = train_first_stage(&world, spec, &spec.sizes, seed)?;
        let apfn = match train_kind(
            VariantKind::AllPairwiseApfn,
            &world,
            spec,
            &spec.sizes,
            seed,
            Some(&base),
            TripWeighting::Off,
            true,
        )? {
            RankerVariant::AllPairwiseApfn(r) => r,
            _ => unreachable!(),
        };
        let mut baseline: Option<(f64, f64)> = None;
        for &k in &ks {
            let config = PipelineConfig {
                first_stage: base.clone(),
                second_stage: Some(RankerVariant::AllPairwiseApfn(apfn.clone())),
                rerank_top_k: k,
            };
            let start = Instant::now();
            let mut ranked = Vec::with_capacity(world.eval.len());
            for imp in &world.eval {
                let outcome = rank(&config, &imp.query, &imp.candidates)?;
                ranked.push(RankedImpression {
                    ordering: outcome.ordering,
                    booked_index: imp.booked_index,
                    prices: imp.candidates.iter().map(|l| l.price).collect(),
                });
            }
            let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
            let latency_ms = elapsed_ms / world.eval.len() as f64;
            let ndcg_value = mean_ndcg(&ranked)?;
            let (base_ndcg, base_latency) = *baseline.get_or_insert((ndcg_value, latency_ms));
            records.push(record(
                "all-pairwise-apfn",
                seed,
                "rerank_k",
                k as f64,
                "ndcg",
                ndcg_value,
                elapsed_ms,
            ));
            records.push(record(
                "all-pairwise-apfn",
                seed,
                "rerank_k",
                k as f64,
                "latency_ms",
                latency_ms,
                elapsed_ms,
            ));
            records.push(record(
                "all-pairwise-apfn",
                seed,
                "rerank_k",
                k as f64,
                "ndcg_pct_change",
                (ndcg_value - base_ndcg) / base_ndcg * 100.0,
                elapsed_ms,
            ));
            records.push(record(
                "all-pairwise-apfn",
                seed,
                "rerank_k",
                k as f64,
                "latency_pct_change",
                (latency_ms - base_latency) / base_latency * 100.0,
                elapsed_ms,
            ));
        }
    }
    Ok(Report::new(spec.clone(), records, Vec::new()))
}

/// First-page price diversity as the rerank depth grows, for the set-aware
/// pipeline and for the pairwise-only pipeline (which cannot depend on k).
pub fn run_diversity(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let world = build_world(spec)?;
    let page = spec.page_size.min(spec.candidates_per_impression);
    let mut records = Vec::new();
    for &seed in &spec.model_seeds {
        let base = train_first_stage(&world, spec, &spec.sizes, seed)?;
        let apfn = train_kind(
            VariantKind::AllPairwiseApfn,
            &world,
            spec,
            &spec.sizes,
            seed,
            Some(&base),
            TripWeighting::Off,
            true,
        )?;
        for &k in &spec.rerank_ks {
            for (label, second) in
                [("all-pairwise-apfn", Some(apfn.clone())), ("pairwise", None)]
            {
                let config = PipelineConfig {
                    first_stage: base.clone(),
                    second_stage: second,
                    rerank_top_k: k,
                };
                let start = Instant::now();
                let mut total = 0.0;
                for imp in &world.eval {
                    let outcome = rank(&config, &imp.query, &imp.candidates)?;
                    let prices: Vec<f64> = outcome
                        .ordering
                        .iter()
                        .map(|&pos| imp.candidates[pos].price)
                        .collect();
                    total += price_variance_diversity(&prices, page)?;
                }
                records.push(record(
                    label,
                    seed,
                    "rerank_k",
                    k as f64,
                    "price_variance_diversity",
                    total / world.eval.len() as f64,
                    start.elapsed().as_secs_f64() * 1e3,
                ));
            }
        }
    }
    Ok(Report::new(spec.clone(), records, Vec::new()))
}

/// Per-seed NDCG and per-variant standard deviation (epistemic uncertainty
/// across training seeds).
pub fn run_uncertainty(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let world = build_world(spec)?;
    let cells: Vec<(VariantKind, u64)> = spec
        .model_seeds
        .iter()
        .flat_map(|&seed| VariantKind::ALL.into_iter().map(move |kind| (kind, seed)))
        .collect();
    let results = run_cells(cells.len(), thread_count(), |i| {
        let (kind, seed) = cells[i];
        let start = Instant::now();
        let trained =
            train_kind(kind, &world, spec, &spec.sizes, seed, None, TripWeighting::Off, true)?;
        let ndcg_value = evaluate_ndcg(&trained, &world.eval)?;
        Ok(record(
            kind.as_str(),
            seed,
            "seed_sweep",
            seed as f64,
            "ndcg",
            ndcg_value,
            start.elapsed().as_secs_f64() * 1e3,
        ))
    })?;
    let mut records = results;
    let mut notes = Vec::new();
    if spec.model_seeds.len() < 2 {
        notes.push("single seed: stddev omitted".to_string());
    } else {
        for kind in VariantKind::ALL {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.variant == kind.as_str() && r.metric == "ndcg")
                .map(|r| r.metric_value)
                .collect();
            let (mean, stddev) = mean_and_stddev(&values);
            records.push(record(
                kind.as_str(),
                0,
                "aggregate",
                values.len() as f64,
                "ndcg_mean",
                mean,
                0.0,
            ));
            records.push(record(
                kind.as_str(),
                0,
                "aggregate",
                values.len() as f64,
                "ndcg_stddev",
                stddev,
                0.0,
            ));
        }
    }
    Ok(Report::new(spec.clone(), records, notes))
}

/// Held-out log comparison of all five variants against the pairwise
/// control. This is an offline stand-in only: offline NDCG movements are not
/// a substitute for online measurement.
pub fn run_ab_offline(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let world = build_world(spec)?;
    let cells: Vec<(VariantKind, u64)> = spec
        .model_seeds
        .iter()
        .flat_map(|&seed| VariantKind::ALL.into_iter().map(move |kind| (kind, seed)))
        .collect();
    let results = run_cells(cells.len(), thread_count(), |i| {
        let (kind, seed) = cells[i];
        let start = Instant::now();
        // One shared first stage per seed keeps the set-aware variants'
        // residual base identical to the pairwise control.
        let base = train_first_stage(&world, spec, &spec.sizes, seed)?;
        let trained = if kind == VariantKind::Pairwise {
            RankerVariant::Pairwise(base)
        } else {
            train_kind(kind, &world, spec, &spec.sizes, seed, Some(&base), TripWeighting::Off, true)?
        };
        let ndcg_value = evaluate_ndcg(&trained, &world.eval)?;
        Ok(record(
            kind.as_str(),
            seed,
            "seed_sweep",
            seed as f64,
            "ndcg",
            ndcg_value,
            start.elapsed().as_secs_f64() * 1e3,
        ))
    })?;
    let mut records = results;
    let pairwise_mean = {
        let values: Vec<f64> = records
            .iter()
            .filter(|r| r.variant == "pairwise" && r.metric == "ndcg")
            .map(|r| r.metric_value)
            .collect();
        mean_and_stddev(&values).0
    };
    for kind in VariantKind::ALL {
        let values: Vec<f64> = records
            .iter()
            .filter(|r| r.variant == kind.as_str() && r.metric == "ndcg")
            .map(|r| r.metric_value)
            .collect();
        let (mean, stddev) = mean_and_stddev(&values);
        let n = values.len() as f64;
        records.push(record(kind.as_str(), 0, "aggregate", n, "ndcg_mean", mean, 0.0));
        records.push(record(
            kind.as_str(),
            0,
            "aggregate",
            n,
            "pct_gain_vs_pairwise",
            (mean - pairwise_mean) / pairwise_mean * 100.0,
            0.0,
        ));
        records.push(record(
            kind.as_str(),
            0,
            "aggregate",
            n,
            "ci95_half_width",
            1.96 * stddev / n.sqrt(),
            0.0,
        ));
    }
    let notes = vec![
        "offline held-out comparison; not a substitute for online measurement".to_string(),
    ];
    Ok(Report::new(spec.clone(), records, notes))
}

/// Jitter stability: mean top-k flips of the residual pipeline against the
/// non-residual ablation (the set-aware logit used alone).
pub fn run_stability(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let world = build_world(spec)?;
    let mut records = Vec::new();
    let mut mean_flips = [Vec::new(), Vec::new()]; // residual, non-residual
    for &seed in &spec.model_seeds {
        let base = train_first_stage(&world, spec, &spec.sizes, seed)?;
        let conditions = run_cells(2, thread_count().min(2), |cond| {
            let residual = cond == 0;
            train_kind(
                VariantKind::AllPairwiseApfn,
                &world,
                spec,
                &spec.sizes,
                seed,
                Some(&base),
                TripWeighting::Off,
                residual,
            )
        })?;
        for (cond, trained) in conditions.into_iter().enumerate() {
            let label = if cond == 0 { "apfn-residual" } else { "apfn-non-residual" };
            let config = PipelineConfig {
                first_stage: base.clone(),
                second_stage: Some(trained),
                rerank_top_k: spec.flip_k,
            };
            let start = Instant::now();
            let mut flip_total = 0usize;
            let mut jitter_count = 0usize;
            for q in 0..spec.jitter_queries {
                let query = sample_query(mix(spec.data_seed, 0x9000 + q as u64));
                let Some(candidates) =
                    select_candidates(&world.pool, &query, spec.candidates_per_impression)
                else {
                    continue;
                };
                let original_ids = pipeline_ranked_ids(&config, &query, &candidates)?;
                for j in 0..spec.jitters_per_query {
                    let Ok(jittered) =
                        jitter_query(&query, spec.jitter_magnitude, mix(query.seed, j as u64))
                    else {
                        continue;
                    };
                    let Some(jittered_candidates) = select_candidates(
                        &world.pool,
                        &jittered,
                        spec.candidates_per_impression,
                    ) else {
                        continue;
                    };
                    let jittered_ids =
                        pipeline_ranked_ids(&config, &jittered, &jittered_candidates)?;
                    flip_total += count_flips(&original_ids, &jittered_ids, spec.flip_k)?;
                    jitter_count += 1;
                }
            }
            if jitter_count == 0 {
                return Err(Error::Generation(
                    "no jittered queries produced a full candidate set".to_string(),
                ));
            }
            let mean = flip_total as f64 / jitter_count as f64;
            mean_flips[cond].push(mean);
            records.push(record(
                label,
                seed,
                "jitter",
                spec.jitter_magnitude,
                "mean_flips",
                mean,
                start.elapsed().as_secs_f64() * 1e3,
            ));
        }
    }
    let (res_mean, _) = mean_and_stddev(&mean_flips[0]);
    let (nonres_mean, _) = mean_and_stddev(&mean_flips[1]);
    let reduction = if nonres_mean > 0.0 {
        (nonres_mean - res_mean) / nonres_mean * 100.0
    } else {
        0.0
    };
    records.push(record(
        "reduction",
        0,
        "aggregate",
        spec.model_seeds.len() as f64,
        "flip_reduction_pct",
        reduction,
        0.0,
    ));
    Ok(Report::new(spec.clone(), records, Vec::new()))
}

/// Trip-quality weighted training against the unweighted control at equal
/// seeds: held-out NDCG and the mean trip rating of the top 3 positions.
pub fn run_multi_objective(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let world = build_world(spec)?;
    let mut records = Vec::new();
    for &seed in &spec.model_seeds {
        let base = train_first_stage(&world, spec, &spec.sizes, seed)?;
        let conditions = run_cells(2, thread_count().min(2), |cond| {
            let weighting = if cond == 0 {
                TripWeighting::Off
            } else {
                TripWeighting::On { alpha: spec.alpha }
            };
            train_kind(
                VariantKind::AllPairwiseApfn,
                &world,
                spec,
                &spec.sizes,
                seed,
                Some(&base),
                weighting,
                true,
            )
        })?;
        for (cond, trained) in conditions.into_iter().enumerate() {
            let label = if cond == 0 { "unweighted" } else { "weighted" };
            let start = Instant::now();
            let ndcg_value = evaluate_ndcg(&trained, &world.eval)?;
            let rating = evaluate_top3_rating(&trained, &world.eval)?;
            let runtime = start.elapsed().as_secs_f64() * 1e3;
            records.push(record(label, seed, "alpha", spec.alpha, "ndcg", ndcg_value, runtime));
            records.push(record(
                label,
                seed,
                "alpha",
                spec.alpha,
                "mean_top3_trip_rating",
                rating,
                runtime,
            ));
        }
    }
    Ok(Report::new(spec.clone(), records, Vec::new()))
}

/// Dispatches a spec to its experiment runner.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Report> {
    match spec.experiment {
        ExperimentKind::ParamScaling => run_param_scaling(spec),
        ExperimentKind::RerankTradeoff => run_rerank_tradeoff(spec),
        ExperimentKind::Diversity => run_diversity(spec),
        ExperimentKind::Uncertainty => run_uncertainty(spec),
        ExperimentKind::AbOffline => run_ab_offline(spec),
        ExperimentKind::Stability => run_stability(spec),
        ExperimentKind::MultiObjective => run_multi_objective(spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec(kind: ExperimentKind) -> ExperimentSpec {
        let mut spec = ExperimentSpec::default_for(kind);
        spec.model_seeds = vec![1];
        spec.listing_pool = 400;
        spec.train_impressions = 40;
        spec.eval_impressions = 20;
        spec.candidates_per_impression = 8;
        spec.rerank_ks = vec![1, 4, 8];
        spec.page_size = 4;
        spec.epochs = 1;
        spec.sizes = ModelSizes::small();
        spec.param_sweep = vec![ModelSizes::small()];
        spec.jitter_queries = 10;
        spec.jitters_per_query = 2;
        spec.flip_k = 4;
        spec
    }

    #[test]
    fn spec_round_trips_through_json_with_defaults() {
        let text = r#"{"experiment":"stability","data_seed":3,"model_seeds":[4]}"#;
        let spec: ExperimentSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.experiment, ExperimentKind::Stability);
        assert_eq!(spec.data_seed, 3);
        assert_eq!(spec.model_seeds, vec![4]);
        assert_eq!(spec.epochs, d_epochs());
        let echoed = serde_json::to_string(&spec).unwrap();
        let back: ExperimentSpec = serde_json::from_str(&echoed).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn param_scaling_single_cell_shape_and_determinism() {
        let mut spec = tiny_spec(ExperimentKind::ParamScaling);
        spec.param_sweep = vec![ModelSizes::small()];
        let a = run_param_scaling(&spec).unwrap();
        assert_eq!(a.records.len(), 5); // one per variant
        for r in &a.records {
            assert_eq!(r.metric, "ndcg");
            assert!(r.metric_value > 0.0 && r.metric_value <= 1.0);
            assert!(r.value > 0.0);
        }
        let b = run_param_scaling(&spec).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.variant, y.variant);
            assert_eq!(x.metric_value.to_bits(), y.metric_value.to_bits());
        }
    }

    #[test]
    fn rerank_tradeoff_baseline_is_zero_change() {
        let spec = tiny_spec(ExperimentKind::RerankTradeoff);
        let report = run_rerank_tradeoff(&spec).unwrap();
        let k1: Vec<_> = report
            .records
            .iter()
            .filter(|r| r.metric == "ndcg_pct_change" && r.value == 1.0)
            .collect();
        assert!(!k1.is_empty());
        for r in k1 {
            assert_eq!(r.metric_value, 0.0);
        }
        let latency: Vec<f64> = report
            .records
            .iter()
            .filter(|r| r.metric == "latency_ms")
            .map(|r| r.metric_value)
            .collect();
        assert_eq!(latency.len(), 3);
        assert!(latency[2] > latency[0], "k=8 must cost more than k=1: {latency:?}");
    }

    #[test]
    fn diversity_pairwise_rows_do_not_depend_on_k() {
        let spec = tiny_spec(ExperimentKind::Diversity);
        let report = run_diversity(&spec).unwrap();
        let pairwise: Vec<f64> = report
            .records
            .iter()
            .filter(|r| r.variant == "pairwise")
            .map(|r| r.metric_value)
            .collect();
        assert_eq!(pairwise.len(), 3);
        assert!(pairwise.windows(2).all(|w| w[0] == w[1]), "{pairwise:?}");
    }

    #[test]
    fn uncertainty_report_shape() {
        let mut spec = tiny_spec(ExperimentKind::Uncertainty);
        spec.model_seeds = vec![1, 2];
        let report = run_uncertainty(&spec).unwrap();
        let ndcg_rows = report.records.iter().filter(|r| r.metric == "ndcg").count();
        assert_eq!(ndcg_rows, 10); // 5 variants x 2 seeds
        let stddev_rows = report.records.iter().filter(|r| r.metric == "ndcg_stddev").count();
        assert_eq!(stddev_rows, 5);

        spec.model_seeds = vec![1];
        let single = run_uncertainty(&spec).unwrap();
        assert_eq!(single.records.iter().filter(|r| r.metric == "ndcg_stddev").count(), 0);
        assert!(!single.notes.is_empty());
    }

    #[test]
    fn stability_zero_magnitude_means_zero_flips() {
        let mut spec = tiny_spec(ExperimentKind::Stability);
        spec.jitter_magnitude = 0.0;
        let report = run_stability(&spec).unwrap();
        for r in report.records.iter().filter(|r| r.metric == "mean_flips") {
            assert_eq!(r.metric_value, 0.0, "{}", r.variant);
        }
    }

    #[test]
    fn multi_objective_alpha_zero_is_bit_identical() {
        let mut spec = tiny_spec(ExperimentKind::MultiObjective);
        spec.alpha = 0.0;
        let report = run_multi_objective(&spec).unwrap();
        let by = |label: &str, metric: &str| -> Vec<f64> {
            report
                .records
                .iter()
                .filter(|r| r.variant == label && r.metric == metric)
                .map(|r| r.metric_value)
                .collect()
        };
        for metric in ["ndcg", "mean_top3_trip_rating"] {
            let off = by("unweighted", metric);
            let on = by("weighted", metric);
            assert_eq!(off.len(), 1);
            assert_eq!(off[0].to_bits(), on[0].to_bits(), "{metric}");
        }
        assert_eq!(report.records.iter().filter(|r| r.metric == "ndcg").count(), 2);
    }

    #[test]
    fn ab_offline_reports_gain_rows() {
        let mut spec = tiny_spec(ExperimentKind::AbOffline);
        spec.model_seeds = vec![1, 2];
        let report = run_ab_offline(&spec).unwrap();
        let gains = report
            .records
            .iter()
            .filter(|r| r.metric == "pct_gain_vs_pairwise")
            .count();
        assert_eq!(gains, 5);
        let pairwise_gain = report
            .records
            .iter()
            .find(|r| r.variant == "pairwise" && r.metric == "pct_gain_vs_pairwise")
            .unwrap();
        assert_eq!(pairwise_gain.metric_value, 0.0);
    }
}
