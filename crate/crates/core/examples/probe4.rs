// Dev probe: oracle NDCG gap between context-aware and context-free ranking,
// swept over chooser temperature.
use ltrlab_core::aggregation::scores_to_ranking;
use ltrlab_core::metrics::{mean_ndcg, RankedImpression};
use ltrlab_core::seeds::mix;
use ltrlab_core::sim::*;

fn main() {
    let pool = generate_listings(1500, 8, 1).unwrap();
    for temp in [0.2, 0.3, 0.4, 0.5, 0.7] {
        let mut cfg = ChoiceModelConfig::default_synthetic();
        cfg.temperature = temp;
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

        let nd_discounted = rank_by(&|imp| {
            let utilities: Vec<f64> = imp
                .candidates
                .iter()
                .map(|l| ground_truth_utility(&imp.query, l, &cfg).unwrap())
                .collect();
            discounted_utilities(&imp.candidates, &utilities, &cfg)
        });
        let nd_raw = rank_by(&|imp| {
            imp.candidates
                .iter()
                .map(|l| ground_truth_utility(&imp.query, l, &cfg).unwrap())
                .collect()
        });
        println!(
            "T={temp:.2} discounted={nd_discounted:.5} raw={nd_raw:.5} headroom={:+.5}",
            nd_discounted - nd_raw
        );
    }
}
