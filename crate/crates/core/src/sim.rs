//! Synthetic marketplace and search-log generator.
//!
//! Listings carry an observable feature vector plus a hidden per-listing
//! appeal term that only the ground-truth chooser sees. The chooser is a
//! similarity-discounted softmax: a listing's utility is penalized for every
//! similar listing in the same candidate set that beats it, so with a
//! positive `similarity_penalty` the booking probability of a listing depends
//! on the whole set shown, not just the listing itself. With the penalty at
//! zero the chooser reduces to an independent multinomial logit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::softmax;
use crate::seeds::mix;

/// Feature vector layout: `[price_norm, location_x, location_y, quality,
/// amenity_0, amenity_1, ...]`. Widths below this minimum are invalid.
pub const MIN_FEATURE_WIDTH: usize = 4;
/// Default observable feature width.
pub const DEFAULT_FEATURE_WIDTH: usize = 8;
/// Index of the normalized price within the feature vector.
pub const PRICE_FEATURE: usize = 0;
/// Index of the quality signal within the feature vector.
pub const QUALITY_FEATURE: usize = 3;

/// Listings come in clusters (think: units in the same building). Cluster
/// centers carry the marginal distributions; members jitter around them, so
/// near-duplicates are common within a viewport.
const CLUSTER_SIZE: usize = 4;
/// Nightly prices: cluster centers are log-normal around this median.
const PRICE_LOG_MEDIAN: f64 = 150.0;
const PRICE_LOG_SIGMA: f64 = 0.45;
/// Within-cluster price jitter on the log scale, mean-one corrected.
const PRICE_JITTER_SIGMA: f64 = 0.35;
/// Cap used by the invertible price normalization.
const PRICE_NORM_CAP: f64 = 1000.0;
/// Within-cluster jitter of location, quality, and amenity signals. The
/// location jitter is wide enough that members of different clusters
/// interleave by distance, so candidate selection churns per listing rather
/// than per cluster.
const LOCATION_JITTER: f64 = 0.06;
const QUALITY_JITTER: f64 = 0.15;
const AMENITY_JITTER: f64 = 0.05;
/// Spread of the hidden per-listing appeal term.
const APPEAL_SIGMA: f64 = 0.10;

/// Closed-form mean of the raw price distribution. The within-cluster jitter
/// is mean-one, so only the center spread enters.
pub fn price_distribution_mean() -> f64 {
    PRICE_LOG_MEDIAN * (PRICE_LOG_SIGMA * PRICE_LOG_SIGMA / 2.0).exp()
}

/// Closed-form standard deviation of the raw price distribution (centers and
/// jitter compose on the log scale).
pub fn price_distribution_stddev() -> f64 {
    let total_var = PRICE_LOG_SIGMA * PRICE_LOG_SIGMA + PRICE_JITTER_SIGMA * PRICE_JITTER_SIGMA;
    price_distribution_mean() * (total_var.exp() - 1.0).sqrt()
}

/// Maps a raw price to the `[0, 1]` feature scale. Invertible via
/// [`price_from_feature`] below the cap.
pub fn price_to_feature(price: f64) -> f64 {
    ((1.0 + price.max(0.0)).ln() / (1.0 + PRICE_NORM_CAP).ln()).clamp(0.0, 1.0)
}

/// Recovers the raw price from the normalized feature.
pub fn price_from_feature(feature: f64) -> f64 {
    ((1.0 + PRICE_NORM_CAP).ln() * feature).exp() - 1.0
}

/// Hidden per-listing values used only by the ground-truth chooser; never
/// part of model inputs and never serialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ListingLatent {
    pub appeal: f64,
}

/// One rankable listing.
#[derive(Debug, Clone, PartialEq)]
pub struct Listing {
    pub id: u64,
    /// Raw nightly price; also available normalized as `features[0]`.
    pub price: f64,
    pub features: Vec<f64>,
    /// `None` for listings read back from a log file.
    pub latent: Option<ListingLatent>,
}

impl Listing {
    pub fn location(&self) -> (f64, f64) {
        (self.features[1], self.features[2])
    }

    pub fn quality(&self) -> f64 {
        self.features[QUALITY_FEATURE]
    }

    fn appeal(&self) -> f64 {
        self.latent.map(|l| l.appeal).unwrap_or(0.0)
    }
}

/// Axis-aligned map viewport in the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl MapBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(Error::Numeric(format!(
                "map bounds must satisfy x_min < x_max and y_min < y_max, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }
}

/// A search request: viewport plus normalized trip-length and guest-count
/// scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub bounds: MapBounds,
    pub features: Vec<f64>,
    pub seed: u64,
}

/// One logged search result.
#[derive(Debug, Clone, PartialEq)]
pub struct Impression {
    pub query: Query,
    pub candidates: Vec<Listing>,
    pub booked_index: usize,
    pub trip_rating: u8,
}

/// Ground-truth chooser parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceModelConfig {
    /// Linear utility weights over the listing features.
    pub utility_weights: Vec<f64>,
    /// Context-discount strength (lambda). Zero disables the discount.
    pub similarity_penalty: f64,
    /// Softmax temperature for the final draw.
    pub temperature: f64,
    /// Standard deviation of the trip-rating noise.
    pub rating_noise: f64,
    /// Bandwidth of the similarity kernel `exp(-||xi - xj||^2 / bandwidth)`.
    /// The default is sharp: near-duplicates score ~0.9, unrelated listings
    /// effectively 0, so the discount reorders around dominated twins rather
    /// than uniformly depressing low-utility listings.
    pub sim_bandwidth: f64,
    /// Scale of the query-listing interaction: each query feature multiplies
    /// one of the trailing listing features.
    pub query_interaction_weight: f64,
}

impl ChoiceModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.similarity_penalty < 0.0 || self.rating_noise < 0.0 {
            return Err(Error::Config(
                "similarity_penalty and rating_noise must be non-negative".to_string(),
            ));
        }
        if !(self.sim_bandwidth > 0.0) {
            return Err(Error::Config("sim_bandwidth must be positive".to_string()));
        }
        Ok(())
    }

    /// Default synthetic marketplace with a strong context discount.
    pub fn default_synthetic() -> Self {
        Self {
            utility_weights: vec![-3.0, 0.0, 0.0, 1.8, 0.9, -0.6, 0.7, 0.5],
            similarity_penalty: 5.0,
            temperature: 0.3,
            rating_noise: 0.5,
            sim_bandwidth: 0.1,
            query_interaction_weight: 0.8,
        }
    }

    /// Same marketplace with the context discount switched off.
    pub fn independent_logit() -> Self {
        Self {
            similarity_penalty: 0.0,
            ..Self::default_synthetic()
        }
    }
}

/// Similarity kernel on feature distance, in `(0, 1]`.
pub fn feature_similarity(a: &[f64], b: &[f64], bandwidth: f64) -> f64 {
    let dist_sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-dist_sq / bandwidth).exp()
}

/// Ground-truth utility of one listing under a query: linear term, the
/// query interaction (trailing features paired with query features), and the
/// hidden appeal.
pub fn ground_truth_utility(query: &Query, listing: &Listing, cfg: &ChoiceModelConfig) -> Result<f64> {
    let x = &listing.features;
    if cfg.utility_weights.len() != x.len() {
        return Err(Error::Shape(format!(
            "utility_weights width {} does not match feature width {}",
            cfg.utility_weights.len(),
            x.len()
        )));
    }
    let linear: f64 = cfg.utility_weights.iter().zip(x).map(|(w, v)| w * v).sum();
    let q = &query.features;
    if x.len() < q.len() {
        return Err(Error::Shape(format!(
            "feature width {} shorter than query feature width {}",
            x.len(),
            q.len()
        )));
    }
    let tail = &x[x.len() - q.len()..];
    let interaction: f64 = q.iter().zip(tail).map(|(qv, xv)| qv * xv).sum();
    Ok(linear + cfg.query_interaction_weight * interaction + listing.appeal())
}

/// Context-discounted utilities: `u'_i = u_i - lambda * sum_{j != i}
/// sim(i, j) * max(0, u_j - u_i)`.
pub fn discounted_utilities(
    candidates: &[Listing],
    utilities: &[f64],
    cfg: &ChoiceModelConfig,
) -> Vec<f64> {
    if cfg.similarity_penalty == 0.0 {
        return utilities.to_vec();
    }
    let n = candidates.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut penalty = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let gap = utilities[j] - utilities[i];
            if gap > 0.0 {
                penalty += feature_similarity(
                    &candidates[i].features,
                    &candidates[j].features,
                    cfg.sim_bandwidth,
                ) * gap;
            }
        }
        out.push(utilities[i] - cfg.similarity_penalty * penalty);
    }
    out
}

/// Booking probabilities of the ground-truth chooser for a candidate set.
pub fn choice_probabilities(
    query: &Query,
    candidates: &[Listing],
    cfg: &ChoiceModelConfig,
) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::Shape("candidate set must be non-empty".to_string()));
    }
    cfg.validate()?;
    let utilities: Vec<f64> = candidates
        .iter()
        .map(|l| ground_truth_utility(query, l, cfg))
        .collect::<Result<_>>()?;
    let discounted = discounted_utilities(candidates, &utilities, cfg);
    let scaled: Vec<f64> = discounted.iter().map(|u| u / cfg.temperature).collect();
    softmax(&scaled)
}

/// Samples the booked index from the ground-truth chooser.
pub fn ground_truth_choice(
    query: &Query,
    candidates: &[Listing],
    cfg: &ChoiceModelConfig,
    rng_seed: u64,
) -> Result<usize> {
    let probs = choice_probabilities(query, candidates, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let draw: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cumulative += p;
        if draw < cumulative {
            return Ok(i);
        }
    }
    Ok(probs.len() - 1)
}

/// Trip rating left after a stay: `clamp(round(1 + 4 * quality + noise), 1, 5)`
/// with Gaussian noise of width `rating_noise`.
pub fn assign_trip_rating(booked: &Listing, cfg: &ChoiceModelConfig, rng_seed: u64) -> u8 {
    let noise = if cfg.rating_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        Normal::new(0.0, cfg.rating_noise)
            .expect("validated non-negative noise")
            .sample(&mut rng)
    } else {
        0.0
    };
    let raw = 1.0 + 4.0 * booked.quality() + noise;
    (raw.round().clamp(1.0, 5.0)) as u8
}

/// Expected trip rating of a listing under the configured noise-free mapping.
pub fn noiseless_trip_rating(listing: &Listing) -> f64 {
    (1.0 + 4.0 * listing.quality()).round().clamp(1.0, 5.0)
}

/// Generates `count` listings with deterministic per-listing streams derived
/// from `seed`.
///
/// Listings come in clusters of [`CLUSTER_SIZE`]: a cluster center draws the
/// per-dimension distributions (price log-normal, location uniform in the
/// unit square, quality beta-like, amenity signals uniform) and each member
/// jitters tightly around it. Near-duplicate listings therefore co-occur in
/// viewports, which is what gives the context-dependent chooser something to
/// act on.
pub fn generate_listings(count: usize, feature_width: usize, seed: u64) -> Result<Vec<Listing>> {
    if count == 0 {
        return Err(Error::Config("listing count must be >= 1".to_string()));
    }
    if feature_width < MIN_FEATURE_WIDTH {
        return Err(Error::Config(format!(
            "feature width must be >= {MIN_FEATURE_WIDTH}, got {feature_width}"
        )));
    }
    let price_dist = LogNormal::new(PRICE_LOG_MEDIAN.ln(), PRICE_LOG_SIGMA)
        .expect("valid log-normal parameters");
    let quality_dist = Beta::new(2.0, 2.0).expect("valid beta parameters");
    let appeal_dist = Normal::new(0.0, APPEAL_SIGMA).expect("valid normal parameters");
    let jitter_dist = Normal::new(0.0, PRICE_JITTER_SIGMA).expect("valid normal parameters");

    let mut listings = Vec::with_capacity(count);
    for i in 0..count {
        let cluster = i / CLUSTER_SIZE;
        // Members of a cluster re-derive the identical center stream.
        let mut center_rng = ChaCha8Rng::seed_from_u64(mix(seed, 0xC1A5_7E00 + cluster as u64));
        let center_price = price_dist.sample(&mut center_rng);
        let center_x: f64 = center_rng.gen_range(0.0..=1.0);
        let center_y: f64 = center_rng.gen_range(0.0..=1.0);
        let center_quality = quality_dist.sample(&mut center_rng);
        let center_amenities: Vec<f64> = (MIN_FEATURE_WIDTH..feature_width)
            .map(|_| center_rng.gen_range(0.0..=1.0))
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, i as u64));
        // Mean-one log-normal jitter keeps the closed-form price mean exact.
        let price = center_price
            * (jitter_dist.sample(&mut rng) - PRICE_JITTER_SIGMA * PRICE_JITTER_SIGMA / 2.0).exp();
        let mut features = Vec::with_capacity(feature_width);
        features.push(price_to_feature(price));
        features.push((center_x + rng.gen_range(-LOCATION_JITTER..=LOCATION_JITTER)).clamp(0.0, 1.0));
        features.push((center_y + rng.gen_range(-LOCATION_JITTER..=LOCATION_JITTER)).clamp(0.0, 1.0));
        features.push(
            (center_quality + rng.gen_range(-QUALITY_JITTER..=QUALITY_JITTER)).clamp(0.0, 1.0),
        );
        for amenity in &center_amenities {
            features.push((amenity + rng.gen_range(-AMENITY_JITTER..=AMENITY_JITTER)).clamp(0.0, 1.0));
        }
        let appeal = appeal_dist.sample(&mut rng);
        listings.push(Listing {
            id: i as u64,
            price,
            features,
            latent: Some(ListingLatent { appeal }),
        });
    }
    Ok(listings)
}

/// Deterministic candidate selection for a query: the `n` in-bounds listings
/// closest to the viewport center (ties by id). Returns `None` when fewer
/// than `n` listings are in bounds.
pub fn select_candidates(pool: &[Listing], query: &Query, n: usize) -> Option<Vec<Listing>> {
    let (cx, cy) = query.bounds.center();
    let mut in_bounds: Vec<(&Listing, f64)> = pool
        .iter()
        .filter(|l| {
            let (x, y) = l.location();
            query.bounds.contains(x, y)
        })
        .map(|l| {
            let (x, y) = l.location();
            (l, (x - cx) * (x - cx) + (y - cy) * (y - cy))
        })
        .collect();
    if in_bounds.len() < n {
        return None;
    }
    in_bounds.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.id.cmp(&b.0.id)));
    Some(in_bounds.into_iter().take(n).map(|(l, _)| l.clone()).collect())
}

/// Samples a query viewport and trip features from a seeded stream.
pub fn sample_query(seed: u64) -> Query {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cx: f64 = rng.gen_range(0.25..=0.75);
    let cy: f64 = rng.gen_range(0.25..=0.75);
    let hx: f64 = rng.gen_range(0.15..=0.30);
    let hy: f64 = rng.gen_range(0.15..=0.30);
    let bounds = MapBounds {
        x_min: (cx - hx).max(0.0),
        x_max: (cx + hx).min(1.0),
        y_min: (cy - hy).max(0.0),
        y_max: (cy + hy).min(1.0),
    };
    let features = vec![rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)];
    Query { bounds, features, seed }
}

/// A generated log plus the number of impressions skipped for lack of
/// in-bounds candidates.
#[derive(Debug, Clone)]
pub struct GeneratedLog {
    pub impressions: Vec<Impression>,
    pub skipped: usize,
}

/// Generates a search log: per impression, a sampled query, a candidate set,
/// a ground-truth booking, and a trip rating. Deterministic in `seed`.
pub fn generate_search_log(
    num_impressions: usize,
    candidates_per_impression: usize,
    pool: &[Listing],
    cfg: &ChoiceModelConfig,
    seed: u64,
) -> Result<GeneratedLog> {
    if candidates_per_impression > pool.len() {
        return Err(Error::Config(format!(
            "candidates_per_impression {} exceeds pool size {}",
            candidates_per_impression,
            pool.len()
        )));
    }
    if candidates_per_impression == 0 {
        return Err(Error::Config("candidates_per_impression must be >= 1".to_string()));
    }
    cfg.validate()?;
    let mut impressions = Vec::with_capacity(num_impressions);
    let mut skipped = 0usize;
    for i in 0..num_impressions {
        let impression_seed = mix(seed, i as u64);
        let query = sample_query(impression_seed);
        let Some(candidates) = select_candidates(pool, &query, candidates_per_impression) else {
            skipped += 1;
            continue;
        };
        let booked_index = ground_truth_choice(&query, &candidates, cfg, mix(impression_seed, 1))?;
        let trip_rating =
            assign_trip_rating(&candidates[booked_index], cfg, mix(impression_seed, 2));
        impressions.push(Impression {
            query,
            candidates,
            booked_index,
            trip_rating,
        });
    }
    if num_impressions > 0 && impressions.is_empty() {
        return Err(Error::Generation(format!(
            "all {num_impressions} impressions skipped: candidate pool too sparse"
        )));
    }
    Ok(GeneratedLog { impressions, skipped })
}

/// Perturbs each map bound by an independent uniform draw in
/// `[-magnitude, magnitude]`, clamped to the unit square. Trip features and
/// the query seed are unchanged.
pub fn jitter_query(query: &Query, magnitude: f64, seed: u64) -> Result<Query> {
    if magnitude < 0.0 {
        return Err(Error::Config(format!(
            "jitter magnitude must be non-negative, got {magnitude}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut delta = || rng.gen_range(-magnitude..=magnitude);
    let bounds = MapBounds {
        x_min: (query.bounds.x_min + delta()).clamp(0.0, 1.0),
        x_max: (query.bounds.x_max + delta()).clamp(0.0, 1.0),
        y_min: (query.bounds.y_min + delta()).clamp(0.0, 1.0),
        y_max: (query.bounds.y_max + delta()).clamp(0.0, 1.0),
    };
    bounds.validate()?;
    Ok(Query {
        bounds,
        features: query.features.clone(),
        seed: query.seed,
    })
}

// --- log file round trip ----------------------------------------------------
//
// One impression per line, UTF-8 newline-delimited JSON:
// {"query":{"bounds":[x_min,x_max,y_min,y_max],"features":[..],"seed":n},
//  "candidates":[{"id":n,"features":[..]}],"booked_index":n,"trip_rating":n}
// Hidden listing fields are excluded; the raw price is recovered from the
// normalized price feature on load.

#[derive(Serialize, Deserialize)]
struct QueryLine {
    bounds: [f64; 4],
    features: Vec<f64>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct CandidateLine {
    id: u64,
    features: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ImpressionLine {
    query: QueryLine,
    candidates: Vec<CandidateLine>,
    booked_index: usize,
    trip_rating: u8,
}

impl From<&Impression> for ImpressionLine {
    fn from(imp: &Impression) -> Self {
        ImpressionLine {
            query: QueryLine {
                bounds: [
                    imp.query.bounds.x_min,
                    imp.query.bounds.x_max,
                    imp.query.bounds.y_min,
                    imp.query.bounds.y_max,
                ],
                features: imp.query.features.clone(),
                seed: imp.query.seed,
            },
            candidates: imp
                .candidates
                .iter()
                .map(|l| CandidateLine {
                    id: l.id,
                    features: l.features.clone(),
                })
                .collect(),
            booked_index: imp.booked_index,
            trip_rating: imp.trip_rating,
        }
    }
}

impl ImpressionLine {
    fn into_impression(self, line_no: usize) -> Result<Impression> {
        let [x_min, x_max, y_min, y_max] = self.query.bounds;
        let bounds = MapBounds { x_min, x_max, y_min, y_max };
        bounds.validate().map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if self.booked_index >= self.candidates.len() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "booked_index {} out of range for {} candidates",
                    self.booked_index,
                    self.candidates.len()
                ),
            });
        }
        if !(1..=5).contains(&self.trip_rating) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("trip_rating {} outside 1..=5", self.trip_rating),
            });
        }
        let candidates: Vec<Listing> = self
            .candidates
            .into_iter()
            .map(|c| {
                let price = price_from_feature(c.features[PRICE_FEATURE]);
                Listing {
                    id: c.id,
                    price,
                    features: c.features,
                    latent: None,
                }
            })
            .collect();
        for c in &candidates {
            if c.features.len() < MIN_FEATURE_WIDTH {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("candidate {} has fewer than {MIN_FEATURE_WIDTH} features", c.id),
                });
            }
            let (x, y) = c.location();
            if !bounds.contains(x, y) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("candidate {} lies outside the query bounds", c.id),
                });
            }
        }
        Ok(Impression {
            query: Query {
                bounds,
                features: self.query.features,
                seed: self.query.seed,
            },
            candidates,
            booked_index: self.booked_index,
            trip_rating: self.trip_rating,
        })
    }
}

/// Writes a log as newline-delimited JSON, one impression per line.
pub fn save_log(path: &Path, impressions: &[Impression]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for imp in impressions {
        let line = serde_json::to_string(&ImpressionLine::from(imp))
            .map_err(|e| Error::Serialize(e.to_string()))?;
        out.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a newline-delimited JSON log. Malformed lines fail with the
/// 1-based line number.
pub fn load_log(path: &Path) -> Result<Vec<Impression>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut impressions = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ImpressionLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        impressions.push(parsed.into_impression(line_no)?);
    }
    Ok(impressions)
}
