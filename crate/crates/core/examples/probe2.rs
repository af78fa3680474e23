// Dev probe: hyperparameter grid for the variant hierarchy.
// args: lr epochs kwidth optimizer(adam|sgd) lr2(set-aware lr) epochs2
use ltrlab_core::experiments::*;
use ltrlab_core::net::Activation;
use ltrlab_core::optim::OptAlgo;
use ltrlab_core::rankers::*;
use ltrlab_core::seeds::mix;
use ltrlab_core::sim::*;
use ltrlab_core::training::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.001);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(8);
    let kw: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(8);
    let opt = match args.get(4).map(|s| s.as_str()) {
        Some("sgd") => OptAlgo::Sgd,
        _ => OptAlgo::Adam,
    };
    let lr2: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(lr);
    let epochs2: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(epochs);
    let seed: u64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(1);

    let pool = generate_listings(1500, 8, 1).unwrap();
    let cfg = ChoiceModelConfig::default_synthetic();
    let train = generate_search_log(800, 20, &pool, &cfg, mix(1, 1)).unwrap().impressions;
    let eval = generate_search_log(300, 20, &pool, &cfg, mix(1, 2)).unwrap().impressions;

    let tc = |e, l| TrainConfig {
        epochs: e,
        learning_rate: l,
        optimizer: opt,
        shuffle_seed: mix(seed, 0x5471),
        pairs_per_impression: None,
        trip_weighting: TripWeighting::Off,
        grad_clip_norm: Some(5.0),
        weight_decay: 0.01,
            batch_size: 32,
    };
    let t0 = std::time::Instant::now();
    let fresh = PairwiseRanker::init(8, 2, &[24, 12], Activation::Relu, mix(seed, 0xF0)).unwrap();
    let out = train_variant(RankerVariant::Pairwise(fresh), &train, &tc(epochs, lr)).unwrap();
    let t_pw = t0.elapsed().as_secs_f64();
    let RankerVariant::Pairwise(base) = out.ranker else { panic!() };
    let nd_base = evaluate_ndcg(&RankerVariant::Pairwise(base.clone()), &eval).unwrap();

    let t0 = std::time::Instant::now();
    let tp = TruePairwiseRanker::init(8, 2, &[32, 16], Activation::Relu, mix(seed, 0xB1)).unwrap();
    let out_tp = train_variant(RankerVariant::TruePairwiseGbt(tp), &train, &tc(epochs, lr)).unwrap();
    let t_tp = t0.elapsed().as_secs_f64();
    let first_tp = out_tp.trace.first().unwrap().mean_loss;
    let last_tp = out_tp.trace.last().unwrap().mean_loss;
    let nd_tp = evaluate_ndcg(&out_tp.ranker, &eval).unwrap();
    let RankerVariant::TruePairwiseGbt(h) = &out_tp.ranker else { panic!() };
    let nd_tpa = evaluate_ndcg(&RankerVariant::TruePairwiseAvg(h.clone()), &eval).unwrap();

    let mv = MultivariateConfig {
        k_width: kw,
        e_width: kw,
        feature_net_hidden: vec![kw * 2],
        head_hidden: vec![kw * 2, kw],
        activation: Activation::Relu,
        seed: mix(seed, 0xA11),
        residual: true,
    };
    let t0 = std::time::Instant::now();
    let apfn = AllPairwiseRanker::init(base.clone(), &mv).unwrap();
    let out2 = train_variant(RankerVariant::AllPairwiseApfn(apfn), &train, &tc(epochs2, lr2)).unwrap();
    let t_ap = t0.elapsed().as_secs_f64();
    let RankerVariant::AllPairwiseApfn(trained) = &out2.ranker else { panic!() };
    let imp = &eval[0];
    let bl = trained.base_logits(&imp.candidates, &imp.query).unwrap();
    let (sc, _) = out2.ranker.score_candidates(&imp.query, &imp.candidates).unwrap();
    let spread = sc
        .iter()
        .zip(&bl)
        .map(|(s, b)| s - b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
    let nd_apfn = evaluate_ndcg(&out2.ranker, &eval).unwrap();

    let t0 = std::time::Instant::now();
    let attn = AttentionRanker::init(base.clone(), &mv).unwrap();
    let out3 = train_variant(RankerVariant::AllPairwiseAttn(attn), &train, &tc(epochs2, lr2)).unwrap();
    let t_at = t0.elapsed().as_secs_f64();
    let nd_attn = evaluate_ndcg(&out3.ranker, &eval).unwrap();

    println!(
        "pw {t_pw:.0}s | tp {t_tp:.0}s loss {first_tp:.4}->{last_tp:.4} | apfn {t_ap:.0}s loss {:.4}->{:.4} res[{:.2},{:.2}] | attn {t_at:.0}s loss {:.4}->{:.4}",
        out2.trace.first().unwrap().mean_loss,
        out2.trace.last().unwrap().mean_loss,
        spread.0,
        spread.1,
        out3.trace.first().unwrap().mean_loss,
        out3.trace.last().unwrap().mean_loss,
    );
    println!(
        "seed={seed} ndcg: pairwise={nd_base:.5} tp-gbt={nd_tp:.5} tp-avg={nd_tpa:.5} apfn={nd_apfn:.5} attn={nd_attn:.5}"
    );
}
