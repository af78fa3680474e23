// Dev probe: model-tier CEILINGS computed from the generator internals.
// - univariate oracle: rank by raw utility u (context-free best).
// - bivariate oracle:  g*(a,b) = pair-restricted discounted difference,
//   aggregated with gbt (what a perfect true-pairwise model could know).
// - multivariate oracle: rank by the full discounted utilities u'.
use ltrlab_core::aggregation::{gbt_score, scores_to_ranking, PairLogitRow};
use ltrlab_core::metrics::{mean_ndcg, RankedImpression};
use ltrlab_core::seeds::mix;
use ltrlab_core::sim::*;

fn main() {
    let pool = generate_listings(1500, 8, 1).unwrap();
    let cfg = ChoiceModelConfig::default_synthetic();
    let eval = generate_search_log(400, 20, &pool, &cfg, mix(1, 2)).unwrap().impressions;

    let rank_by = |score_fn: &dyn Fn(&Impression) -> Vec<f64>| {
        let ranked: Vec<RankedImpression> = eval
            .iter()
            .map(|imp| RankedImpression {
                ordering: scores_to_ranking(&score_fn(imp)).unwrap(),
                booked_index: imp.booked_index,
                prices: imp.candidates.iter().map(|l| l.price).collect(),
            })
            .collect();
        mean_ndcg(&ranked).unwrap()
    };

    let utilities = |imp: &Impression| -> Vec<f64> {
        imp.candidates
            .iter()
            .map(|l| ground_truth_utility(&imp.query, l, &cfg).unwrap())
            .collect()
    };

    let nd_uni = rank_by(&|imp| utilities(imp));
    let nd_multi = rank_by(&|imp| discounted_utilities(&imp.candidates, &utilities(imp), &cfg));

    let nd_bi = rank_by(&|imp| {
        let u = utilities(imp);
        let n = imp.candidates.len();
        (0..n)
            .map(|i| {
                let mut logits = Vec::with_capacity(n - 1);
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let sim = feature_similarity(
                        &imp.candidates[i].features,
                        &imp.candidates[j].features,
                        cfg.sim_bandwidth,
                    );
                    let di = u[i] - cfg.similarity_penalty * sim * (u[j] - u[i]).max(0.0);
                    let dj = u[j] - cfg.similarity_penalty * sim * (u[i] - u[j]).max(0.0);
                    logits.push((di - dj) / cfg.temperature);
                }
                gbt_score(&PairLogitRow::new(i, logits)).unwrap()
            })
            .collect()
    });

    println!("tier ceilings: univariate={nd_uni:.5} bivariate-gbt={nd_bi:.5} multivariate={nd_multi:.5}");
    println!(
        "gaps: bi-uni={:+.5} multi-bi={:+.5}",
        nd_bi - nd_uni,
        nd_multi - nd_bi
    );
}
