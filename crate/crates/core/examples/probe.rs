// Dev probe for tuning experiment defaults. Not part of the deliverable API.
use ltrlab_core::experiments::*;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "ab".to_string());
    let start = std::time::Instant::now();
    match which.as_str() {
        "ab" => {
            let spec = ExperimentSpec::default_for(ExperimentKind::AbOffline);
            let report = run_ab_offline(&spec).unwrap();
            for r in &report.records {
                if r.metric == "ndcg" || r.metric == "ndcg_mean" || r.metric == "pct_gain_vs_pairwise" {
                    println!("{:<20} seed={:<3} {:<22} {:.5}", r.variant, r.seed, r.metric, r.metric_value);
                }
            }
        }
        "unc" => {
            let spec = ExperimentSpec::default_for(ExperimentKind::Uncertainty);
            let report = run_uncertainty(&spec).unwrap();
            for r in &report.records {
                if r.metric == "ndcg_stddev" || r.metric == "ndcg_mean" {
                    println!("{:<20} {:<14} {:.6}", r.variant, r.metric, r.metric_value);
                }
            }
        }
        "div" => {
            let spec = ExperimentSpec::default_for(ExperimentKind::Diversity);
            let report = run_diversity(&spec).unwrap();
            for r in &report.records {
                println!("{:<20} seed={:<3} k={:<4} diversity={:.4}", r.variant, r.seed, r.value, r.metric_value);
            }
        }
        "trade" => {
            let spec = ExperimentSpec::default_for(ExperimentKind::RerankTradeoff);
            let report = run_rerank_tradeoff(&spec).unwrap();
            for r in &report.records {
                if r.metric == "ndcg_pct_change" || r.metric == "latency_ms" {
                    println!("{:<20} seed={:<3} k={:<4} {:<18} {:.4}", r.variant, r.seed, r.value, r.metric, r.metric_value);
                }
            }
        }
        "stab" => {
            let spec = ExperimentSpec::default_for(ExperimentKind::Stability);
            let report = run_stability(&spec).unwrap();
            for r in &report.records {
                println!("{:<20} seed={:<3} {:<20} {:.4}", r.variant, r.seed, r.metric, r.metric_value);
            }
        }
        "multi" => {
            let spec = ExperimentSpec::default_for(ExperimentKind::MultiObjective);
            let report = run_multi_objective(&spec).unwrap();
            for r in &report.records {
                println!("{:<20} seed={:<3} {:<22} {:.5}", r.variant, r.seed, r.metric, r.metric_value);
            }
        }
        _ => eprintln!("unknown probe {which}"),
    }
    eprintln!("elapsed: {:.1}s", start.elapsed().as_secs_f64());
}
