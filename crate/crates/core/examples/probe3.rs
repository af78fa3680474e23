// Dev probe: tp-vs-pairwise margin across seeds and tp hyperparameters.
use ltrlab_core::experiments::*;
use ltrlab_core::net::Activation;
use ltrlab_core::optim::OptAlgo;
use ltrlab_core::rankers::*;
use ltrlab_core::seeds::mix;
use ltrlab_core::sim::*;
use ltrlab_core::training::*;

fn main() {
    let pool = generate_listings(1500, 8, 1).unwrap();
    let cfg = ChoiceModelConfig::default_synthetic();
    let n_train: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1600);
    let train = generate_search_log(n_train, 20, &pool, &cfg, mix(1, 1)).unwrap().impressions;
    let eval = generate_search_log(300, 20, &pool, &cfg, mix(1, 2)).unwrap().impressions;

    let tc = |e: usize, l: f64, seed: u64| TrainConfig {
        epochs: e,
        learning_rate: l,
        optimizer: OptAlgo::Adam,
        shuffle_seed: mix(seed, 0x5471),
        pairs_per_impression: None,
        trip_weighting: TripWeighting::Off,
        grad_clip_norm: Some(5.0),
        weight_decay: 0.01,
        batch_size: 32,
    };

    for seed in [1u64, 2, 3] {
        let t0 = std::time::Instant::now();
        let fresh =
            PairwiseRanker::init(8, 2, &[24, 12], Activation::Relu, mix(seed, 0xF0)).unwrap();
        let out =
            train_variant(RankerVariant::Pairwise(fresh), &train, &tc(20, 0.003, seed)).unwrap();
        let nd_pw = evaluate_ndcg(&out.ranker, &eval).unwrap();
        print!("seed={seed} pw(20ep)={nd_pw:.5} ({:.0}s) |", t0.elapsed().as_secs_f64());
        for (epochs, lr, hidden) in [
            (30usize, 0.003f64, vec![32usize, 16]),
            (30, 0.003, vec![48, 24]),
        ] {
            let tp = TruePairwiseRanker::init(8, 2, &hidden, Activation::Relu, mix(seed, 0xB1))
                .unwrap();
            let out_tp =
                train_variant(RankerVariant::TruePairwiseGbt(tp), &train, &tc(epochs, lr, seed))
                    .unwrap();
            let nd = evaluate_ndcg(&out_tp.ranker, &eval).unwrap();
            print!(" e{epochs}/lr{lr}/h{}={:.5}", hidden[0], nd);
        }
        println!();
    }
}
